#include "gs4d/ply.hpp"

#include "gs4d/error.hpp"
#include "gs4d/io_util.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace gs4d {

namespace {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

enum class Type { I8, U8, I16, U16, I32, U32, F32, F64 };

Type parse_type(const std::string& s) {
    if (s == "char" || s == "int8") return Type::I8;
    if (s == "uchar" || s == "uint8") return Type::U8;
    if (s == "short" || s == "int16") return Type::I16;
    if (s == "ushort" || s == "uint16") return Type::U16;
    if (s == "int" || s == "int32") return Type::I32;
    if (s == "uint" || s == "uint32") return Type::U32;
    if (s == "float" || s == "float32") return Type::F32;
    if (s == "double" || s == "float64") return Type::F64;
    throw ParseError("PLY: unknown property type '" + s + "'");
}

std::size_t type_size(Type t) {
    switch (t) {
    case Type::I8: case Type::U8: return 1;
    case Type::I16: case Type::U16: return 2;
    case Type::I32: case Type::U32: case Type::F32: return 4;
    case Type::F64: return 8;
    }
    return 0;
}

double read_binary(const char* p, Type t) {
    switch (t) {
    case Type::I8: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case Type::U8: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case Type::I16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case Type::U16: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case Type::I32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case Type::U32: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case Type::F32: { float v; std::memcpy(&v, p, 4); return v; }
    case Type::F64: { double v; std::memcpy(&v, p, 8); return v; }
    }
    return 0.0;
}

struct Property {
    std::string name;
    Type type = Type::F32;
    bool is_list = false;
    Type count_type = Type::U8;
};

struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;
};

} // namespace

PointCloud read_ply_points(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        if (pos >= bytes.size()) throw ParseError("PLY: header ended before end_header");
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw ParseError("PLY: header ended before end_header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    };

    if (next_line() != "ply") throw ParseError("PLY: missing 'ply' magic line");
    bool binary = false, have_format = false;
    std::vector<Element> elements;
    while (true) {
        const std::string line = next_line();
        std::istringstream in(line);
        std::string word;
        in >> word;
        if (word == "end_header") break;
        if (word.empty() || word == "comment" || word == "obj_info") continue;
        if (word == "format") {
            std::string fmt, version;
            in >> fmt >> version;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else throw ParseError("PLY: unsupported format '" + fmt + "'");
            have_format = true;
        } else if (word == "element") {
            Element e;
            long long count = -1;
            in >> e.name >> count;
            if (e.name.empty() || count < 0 || in.fail()) throw ParseError("PLY: malformed element line '" + line + "'");
            e.count = static_cast<std::size_t>(count);
            elements.push_back(std::move(e));
        } else if (word == "property") {
            if (elements.empty()) throw ParseError("PLY: property before any element");
            Property p;
            std::string type;
            in >> type;
            if (type == "list") {
                std::string ct, it;
                in >> ct >> it >> p.name;
                p.is_list = true;
                p.count_type = parse_type(ct);
                p.type = parse_type(it);
            } else {
                p.type = parse_type(type);
                in >> p.name;
            }
            if (p.name.empty()) throw ParseError("PLY: malformed property line '" + line + "'");
            elements.back().props.push_back(p);
        } else {
            throw ParseError("PLY: unexpected header line '" + line + "'");
        }
    }
    if (!have_format) throw ParseError("PLY: missing format line");

    std::size_t vi = elements.size();
    for (std::size_t i = 0; i < elements.size(); ++i) {
        if (elements[i].name == "vertex") {
            vi = i;
            break;
        }
    }
    if (vi == elements.size()) throw ParseError("PLY: no vertex element");
    const Element& vertex = elements[vi];
    auto find = [&](const char* name) -> int {
        for (std::size_t k = 0; k < vertex.props.size(); ++k) {
            if (vertex.props[k].name == name && !vertex.props[k].is_list) return static_cast<int>(k);
        }
        return -1;
    };
    const int ix = find("x"), iy = find("y"), iz = find("z");
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError("PLY: vertex element lacks x, y or z");
    const int ir = find("red"), ig = find("green"), ib = find("blue");
    const bool has_color = ir >= 0 && ig >= 0 && ib >= 0;

    PointCloud cloud;
    cloud.positions.resize(3 * vertex.count);
    if (has_color) cloud.colors.resize(3 * vertex.count);
    auto color_value = [&](int k, double v) {
        const Type t = vertex.props[k].type;
        if (t == Type::F32 || t == Type::F64) return v;
        if (t == Type::U8) return v / 255.0;
        if (t == Type::U16) return v / 65535.0;
        return v;
    };
    std::vector<double> row(vertex.props.size());
    auto store = [&](std::size_t i) {
        cloud.positions[3 * i] = row[ix];
        cloud.positions[3 * i + 1] = row[iy];
        cloud.positions[3 * i + 2] = row[iz];
        if (has_color) {
            cloud.colors[3 * i] = color_value(ir, row[ir]);
            cloud.colors[3 * i + 1] = color_value(ig, row[ig]);
            cloud.colors[3 * i + 2] = color_value(ib, row[ib]);
        }
    };

    if (!binary) {
        std::istringstream in(bytes.substr(pos));
        for (std::size_t e = 0; e <= vi; ++e) {
            for (std::size_t i = 0; i < elements[e].count; ++i) {
                std::string line;
                if (!std::getline(in, line)) throw ParseError("PLY: truncated data in element '" + elements[e].name + "'");
                if (e != vi) continue;
                std::istringstream ls(line);
                for (std::size_t k = 0; k < vertex.props.size(); ++k) {
                    if (vertex.props[k].is_list) {
                        double count = 0;
                        ls >> count;
                        for (int c = 0; c < static_cast<int>(count); ++c) {
                            double skip;
                            ls >> skip;
                        }
                        continue;
                    }
                    if (!(ls >> row[k])) throw ParseError("PLY: malformed vertex " + std::to_string(i));
                }
                store(i);
            }
        }
    } else {
        const char* p = bytes.data() + pos;
        const char* end = bytes.data() + bytes.size();
        auto need = [&](std::size_t n) {
            if (static_cast<std::size_t>(end - p) < n) throw ParseError("PLY: truncated binary data");
        };
        for (std::size_t e = 0; e <= vi; ++e) {
            const Element& el = elements[e];
            for (std::size_t i = 0; i < el.count; ++i) {
                for (std::size_t k = 0; k < el.props.size(); ++k) {
                    const Property& pr = el.props[k];
                    if (pr.is_list) {
                        need(type_size(pr.count_type));
                        const auto count = static_cast<std::size_t>(read_binary(p, pr.count_type));
                        p += type_size(pr.count_type);
                        need(count * type_size(pr.type));
                        p += count * type_size(pr.type);
                        continue;
                    }
                    need(type_size(pr.type));
                    if (e == vi) row[k] = read_binary(p, pr.type);
                    p += type_size(pr.type);
                }
                if (e == vi) store(i);
            }
        }
    }
    return cloud;
}

namespace {

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

void write_bytes(const std::filesystem::path& path, const std::string& data) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        f.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!f) throw Error("cannot write " + tmp.string());
    });
}

} // namespace

void write_ply_points(const std::filesystem::path& path, const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    if (cloud.positions.size() != 3 * n) throw ShapeError("write_ply_points: positions must be [N][3]");
    const bool color = !cloud.colors.empty();
    if (color && cloud.colors.size() != 3 * n) throw ShapeError("write_ply_points: colours must match points");
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) +
                      "\nproperty float x\nproperty float y\nproperty float z\n";
    if (color) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "end_header\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) put(out, static_cast<float>(cloud.positions[3 * i + k]));
        if (color) {
            for (int k = 0; k < 3; ++k) {
                const double c = std::clamp(cloud.colors[3 * i + k], 0.0, 1.0);
                put(out, static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5)));
            }
        }
    }
    write_bytes(path, out);
}

void write_ply_gaussians(const std::filesystem::path& path, const GaussianSet& set) {
    set.validate();
    const std::size_t n = set.size();
    const int rest = set.basis_count() - 1;
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) + "\n";
    for (const char* p : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        out += std::string("property float ") + p + "\n";
    }
    for (int k = 0; k < 3 * rest; ++k) out += "property float f_rest_" + std::to_string(k) + "\n";
    out += "property float opacity\n";
    for (int k = 0; k < 3; ++k) out += "property float scale_" + std::to_string(k) + "\n";
    for (int k = 0; k < 4; ++k) out += "property float rot_" + std::to_string(k) + "\n";
    out += "end_header\n";
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) put(out, static_cast<float>(set.positions[3 * i + k]));
        for (int k = 0; k < 3; ++k) put(out, 0.0f);
        for (int k = 0; k < 3; ++k) put(out, static_cast<float>(set.sh_dc[3 * i + k]));
        // Channel-major: all rest coefficients of red, then green, then blue.
        for (int ch = 0; ch < 3; ++ch) {
            for (int b = 1; b <= rest; ++b) put(out, static_cast<float>(set.sh(i, b, ch)));
        }
        put(out, static_cast<float>(set.opacities[i]));
        for (int k = 0; k < 3; ++k) put(out, static_cast<float>(set.scales[3 * i + k]));
        for (int k = 0; k < 4; ++k) put(out, static_cast<float>(set.rotations[4 * i + k]));
    }
    write_bytes(path, out);
}

} // namespace gs4d
