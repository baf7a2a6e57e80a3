#include "gs4d/io_util.hpp"

#include "gs4d/error.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace gs4d {

void atomic_write(const std::filesystem::path& path,
                  const std::function<void(const std::filesystem::path&)>& writer) {
    static std::atomic<unsigned> counter{0};
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    try {
        writer(tmp);
        std::filesystem::rename(tmp, path);
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace gs4d
