#include "gs4d/config.hpp"

#include "gs4d/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

namespace gs4d {

double LrSchedule::at(std::uint64_t iter, std::uint64_t total) const {
    if (total == 0 || init == final) return init;
    const double f = std::min(1.0, static_cast<double>(iter) / static_cast<double>(total));
    return std::exp(std::log(init) * (1.0 - f) + std::log(final) * f);
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
    throw InvalidInput("config: invalid value '" + std::string(value) + "' for " + std::string(key));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    T out{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) bad_value(key, text);
    return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    bad_value(key, text);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

struct Setting {
    std::string key;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, std::string_view)> set;
};

template <typename T>
Setting integer(std::string key, T TrainConfig::*member) {
    return {key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
            [member, key](TrainConfig& c, std::string_view v) { c.*member = parse_number<T>(key, v); }};
}

Setting real(std::string key, double TrainConfig::*member) {
    return {key, [member](const TrainConfig& c) { return fmt(c.*member); },
            [member, key](TrainConfig& c, std::string_view v) { c.*member = parse_number<double>(key, v); }};
}

void add_lr(std::vector<Setting>& out, const std::string& name, LrSchedule LrTable::*member) {
    const std::string k = "lr." + name;
    out.push_back({k + ".init", [member](const TrainConfig& c) { return fmt((c.lr.*member).init); },
                   [member, k](TrainConfig& c, std::string_view v) {
                       (c.lr.*member).init = parse_number<double>(k + ".init", v);
                   }});
    out.push_back({k + ".final", [member](const TrainConfig& c) { return fmt((c.lr.*member).final); },
                   [member, k](TrainConfig& c, std::string_view v) {
                       (c.lr.*member).final = parse_number<double>(k + ".final", v);
                   }});
}

const std::vector<Setting>& settings() {
    static const std::vector<Setting> table = [] {
        std::vector<Setting> s;
        s.push_back(integer("seed", &TrainConfig::seed));
        s.push_back(integer("warmup_iters", &TrainConfig::warmup_iters));
        s.push_back(integer("total_iters", &TrainConfig::total_iters));
        s.push_back(integer("densify_from_iter", &TrainConfig::densify_from_iter));
        s.push_back(integer("densify_interval", &TrainConfig::densify_interval));
        s.push_back(integer("densify_stop_iter", &TrainConfig::densify_stop_iter));
        s.push_back(integer("prune_interval", &TrainConfig::prune_interval));
        s.push_back(real("grad_threshold", &TrainConfig::grad_threshold));
        s.push_back(real("size_threshold", &TrainConfig::size_threshold));
        s.push_back(real("opacity_prune_threshold", &TrainConfig::opacity_prune_threshold));
        s.push_back(real("split_factor", &TrainConfig::split_factor));
        s.push_back(integer("max_gaussians", &TrainConfig::max_gaussians));
        s.push_back(real("tv_weight", &TrainConfig::tv_weight));
        s.push_back(integer("batch_size", &TrainConfig::batch_size));
        add_lr(s, "position", &LrTable::position);
        add_lr(s, "plane", &LrTable::plane);
        add_lr(s, "mlp", &LrTable::mlp);
        add_lr(s, "sh_dc", &LrTable::sh_dc);
        add_lr(s, "sh_rest", &LrTable::sh_rest);
        add_lr(s, "opacity", &LrTable::opacity);
        add_lr(s, "scale", &LrTable::scale);
        add_lr(s, "rotation", &LrTable::rotation);
        s.push_back(integer("sh_degree", &TrainConfig::sh_degree));
        s.push_back({"background",
                     [](const TrainConfig& c) {
                         return fmt(c.background[0]) + "," + fmt(c.background[1]) + "," + fmt(c.background[2]);
                     },
                     [](TrainConfig& c, std::string_view v) {
                         const auto parts = split_list(v);
                         if (parts.size() != 3) bad_value("background", v);
                         for (int k = 0; k < 3; ++k) c.background[k] = parse_number<double>("background", parts[k]);
                     }});
        s.push_back(integer("init_random_count", &TrainConfig::init_random_count));
        s.push_back({"field.resolution",
                     [](const TrainConfig& c) {
                         std::string out;
                         for (int k = 0; k < 4; ++k) out += (k ? "," : "") + std::to_string(c.field.resolution[k]);
                         return out;
                     },
                     [](TrainConfig& c, std::string_view v) {
                         const auto parts = split_list(v);
                         if (parts.size() == 1) {
                             c.field.resolution.fill(parse_number<int>("field.resolution", parts[0]));
                         } else if (parts.size() == 4) {
                             for (int k = 0; k < 4; ++k) {
                                 c.field.resolution[k] = parse_number<int>("field.resolution", parts[k]);
                             }
                         } else {
                             bad_value("field.resolution", v);
                         }
                     }});
        s.push_back({"field.multires",
                     [](const TrainConfig& c) {
                         std::string out;
                         for (std::size_t k = 0; k < c.field.multires.size(); ++k) {
                             out += (k ? "," : "") + std::to_string(c.field.multires[k]);
                         }
                         return out;
                     },
                     [](TrainConfig& c, std::string_view v) {
                         c.field.multires.clear();
                         for (const auto& p : split_list(v)) {
                             c.field.multires.push_back(parse_number<int>("field.multires", p));
                         }
                     }});
        auto field_int = [&s](const std::string& key, int FieldConfig::*m) {
            s.push_back({key, [m](const TrainConfig& c) { return std::to_string(c.field.*m); },
                         [m, key](TrainConfig& c, std::string_view v) { c.field.*m = parse_number<int>(key, v); }});
        };
        field_int("field.channels", &FieldConfig::channels);
        field_int("field.hidden", &FieldConfig::hidden);
        field_int("field.feature_width", &FieldConfig::feature_width);
        s.push_back({"field.use_planes", [](const TrainConfig& c) { return fmt(c.field.use_planes); },
                     [](TrainConfig& c, std::string_view v) {
                         c.field.use_planes = parse_bool("field.use_planes", v);
                     }});
        s.push_back({"deform.width", [](const TrainConfig& c) { return std::to_string(c.deform.width); },
                     [](TrainConfig& c, std::string_view v) {
                         c.deform.width = parse_number<int>("deform.width", v);
                     }});
        const char* heads[kHeadCount] = {"position", "rotation", "scale", "color", "opacity"};
        for (int k = 0; k < kHeadCount; ++k) {
            const std::string key = std::string("deform.") + heads[k];
            s.push_back({key, [k](const TrainConfig& c) { return fmt(c.deform.enabled[k]); },
                         [k, key](TrainConfig& c, std::string_view v) {
                             c.deform.enabled[k] = parse_bool(key, v);
                         }});
        }
        s.push_back(integer("log_interval", &TrainConfig::log_interval));
        s.push_back(integer("checkpoint_interval", &TrainConfig::checkpoint_interval));
        return s;
    }();
    return table;
}

} // namespace

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw InvalidInput("config: " + what); };
    if (warmup_iters > total_iters) fail("warmup_iters must not exceed total_iters");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (densify_interval < 1) fail("densify_interval must be >= 1");
    if (prune_interval < 1) fail("prune_interval must be >= 1");
    if (!(split_factor > 1.0)) fail("split_factor must be > 1");
    if (!(tv_weight >= 0.0)) fail("tv_weight must be >= 0");
    if (sh_degree < 0 || sh_degree > kMaxShDegree) fail("sh_degree must be in [0, 3]");
    const std::pair<const char*, const LrSchedule*> lrs[] = {
        {"lr.position", &lr.position}, {"lr.plane", &lr.plane},   {"lr.mlp", &lr.mlp},
        {"lr.sh_dc", &lr.sh_dc},       {"lr.sh_rest", &lr.sh_rest}, {"lr.opacity", &lr.opacity},
        {"lr.scale", &lr.scale},       {"lr.rotation", &lr.rotation}};
    for (const auto& [name, s] : lrs) {
        if (!(s->init > 0.0) || !(s->final > 0.0) || !std::isfinite(s->init) || !std::isfinite(s->final)) {
            fail(std::string(name) + " learning rates must be positive");
        }
    }
    for (int k = 0; k < 4; ++k) {
        if (field.resolution[k] < 2) fail("field.resolution entries must be >= 2");
    }
    if (field.use_planes && field.multires.empty()) fail("field.multires must not be empty");
    for (int m : field.multires) {
        if (m < 1) fail("field.multires entries must be >= 1");
    }
    if (field.channels < 1 || field.hidden < 1 || field.feature_width < 1) {
        fail("field widths must be >= 1");
    }
    if (deform.width < 1) fail("deform.width must be >= 1");
    for (int k = 0; k < 3; ++k) {
        if (!(background[k] >= 0.0 && background[k] <= 1.0)) fail("background must lie in [0, 1]");
    }
}

void apply_setting(TrainConfig& config, std::string_view key, std::string_view value) {
    for (const Setting& s : settings()) {
        if (s.key == key) {
            s.set(config, value);
            return;
        }
    }
    throw InvalidInput("config: unknown key '" + std::string(key) + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(number) + ": expected key = value");
        }
        std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ParseError("config line " + std::to_string(number) + ": empty key");
        out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
    }
    return out;
}

void apply_config_text(TrainConfig& config, std::string_view text) {
    for (const auto& [k, v] : parse_key_values(text)) apply_setting(config, k, v);
}

std::string to_config_text(const TrainConfig& config) {
    std::string out;
    for (const Setting& s : settings()) out += s.key + " = " + s.get(config) + "\n";
    return out;
}

} // namespace gs4d
