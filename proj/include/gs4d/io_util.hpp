#pragma once

#include <filesystem>
#include <functional>
#include <string>

namespace gs4d {

/// Runs `writer` against a sibling temporary path, then renames it over
/// `path`. The temporary is removed if the writer throws.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(const std::filesystem::path&)>& writer);

std::string read_file(const std::filesystem::path& path);

} // namespace gs4d
