#include "gs4d/checkpoint.hpp"

#include "gs4d/error.hpp"
#include "gs4d/io_util.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace gs4d {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'G', '4', 'D', 'C', 'K', 'P', 'T', '\0'};

constexpr std::uint32_t tag(const char (&s)[5]) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[0])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[3])) << 24;
}

constexpr std::uint32_t kConf = tag("CONF");
constexpr std::uint32_t kGaus = tag("GAUS");
constexpr std::uint32_t kFild = tag("FILD");
constexpr std::uint32_t kDnet = tag("DNET");
constexpr std::uint32_t kStat = tag("STAT");

class Writer {
public:
    template <typename T>
    void pod(T v) {
        char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        out_.append(buf, sizeof(T));
    }
    void u32(std::uint32_t v) { pod(v); }
    void u64(std::uint64_t v) { pod(v); }
    void i32(int v) { pod(static_cast<std::int32_t>(v)); }
    void f64(double v) { pod(std::bit_cast<std::uint64_t>(v)); }
    void boolean(bool v) { pod(static_cast<std::uint8_t>(v ? 1 : 0)); }
    void str(const std::string& s) {
        u64(s.size());
        out_ += s;
    }
    void doubles(const double* p, std::size_t n) {
        u64(n);
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }
    void doubles(const std::vector<double>& v) { doubles(v.data(), v.size()); }
    void mlp(const Mlp& m) {
        u64(m.layers.size());
        for (const Linear& l : m.layers) {
            u64(static_cast<std::uint64_t>(l.weight.rows()));
            u64(static_cast<std::uint64_t>(l.weight.cols()));
            doubles(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
            doubles(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
        }
    }
    void section(std::uint32_t t, const Writer& body) {
        u32(t);
        u64(body.out_.size());
        out_ += body.out_;
    }
    std::string& bytes() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const char* p, std::size_t n, std::string what) : p_(p), end_(p + n), what_(std::move(what)) {}

    template <typename T>
    T pod() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, p_, sizeof(T));
        p_ += sizeof(T);
        return v;
    }
    std::uint32_t u32() { return pod<std::uint32_t>(); }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    int i32() { return pod<std::int32_t>(); }
    double f64() { return std::bit_cast<double>(pod<std::uint64_t>()); }
    bool boolean() {
        const auto v = pod<std::uint8_t>();
        if (v > 1) fail("invalid boolean");
        return v == 1;
    }
    std::size_t count(std::size_t elem_size) {
        const std::uint64_t n = u64();
        if (elem_size > 0 && n > remaining() / elem_size) fail("length exceeds the section");
        return static_cast<std::size_t>(n);
    }
    std::string str() {
        const std::size_t n = count(1);
        std::string s(p_, n);
        p_ += n;
        return s;
    }
    std::vector<double> doubles() {
        const std::size_t n = count(8);
        std::vector<double> v(n);
        for (double& d : v) d = f64();
        return v;
    }
    void doubles_into(double* p, std::size_t expected) {
        const std::size_t n = count(8);
        if (n != expected) fail("array length mismatch");
        for (std::size_t i = 0; i < n; ++i) p[i] = f64();
    }
    Mlp mlp() {
        Mlp m;
        const std::size_t layers = count(16);
        for (std::size_t l = 0; l < layers; ++l) {
            const std::uint64_t rows = u64(), cols = u64();
            if (rows > (1u << 20) || cols > (1u << 20)) fail("implausible layer size");
            Linear layer;
            layer.weight.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
            layer.bias.resize(static_cast<Eigen::Index>(rows));
            doubles_into(layer.weight.data(), static_cast<std::size_t>(rows * cols));
            doubles_into(layer.bias.data(), static_cast<std::size_t>(rows));
            m.layers.push_back(std::move(layer));
        }
        return m;
    }
    std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }
    bool done() const { return p_ == end_; }
    const char* position() const { return p_; }
    void skip(std::size_t n) {
        need(n);
        p_ += n;
    }
    [[noreturn]] void fail(const std::string& why) const {
        throw IntegrityError("checkpoint " + what_ + ": " + why);
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) fail("truncated");
    }
    const char* p_;
    const char* end_;
    std::string what_;
};

Writer encode_gaussians(const GaussianSet& g) {
    Writer w;
    w.i32(g.sh_degree);
    w.doubles(g.positions);
    w.doubles(g.rotations);
    w.doubles(g.scales);
    w.doubles(g.opacities);
    w.doubles(g.sh_dc);
    w.doubles(g.sh_rest);
    return w;
}

GaussianSet decode_gaussians(Reader& r) {
    GaussianSet g;
    g.sh_degree = r.i32();
    if (g.sh_degree < 0 || g.sh_degree > kMaxShDegree) r.fail("invalid SH degree");
    g.positions = r.doubles();
    g.rotations = r.doubles();
    g.scales = r.doubles();
    g.opacities = r.doubles();
    g.sh_dc = r.doubles();
    g.sh_rest = r.doubles();
    return g;
}

void encode_field_config(Writer& w, const FieldConfig& c) {
    for (int v : c.resolution) w.i32(v);
    w.u64(c.multires.size());
    for (int v : c.multires) w.i32(v);
    w.i32(c.channels);
    w.i32(c.hidden);
    w.i32(c.feature_width);
    w.boolean(c.use_planes);
}

FieldConfig decode_field_config(Reader& r) {
    FieldConfig c;
    for (int& v : c.resolution) v = r.i32();
    c.multires.resize(r.count(4));
    for (int& v : c.multires) v = r.i32();
    c.channels = r.i32();
    c.hidden = r.i32();
    c.feature_width = r.i32();
    c.use_planes = r.boolean();
    return c;
}

Writer encode_field(const HexPlaneField& f) {
    Writer w;
    encode_field_config(w, f.config);
    for (int k = 0; k < 3; ++k) w.f64(f.bounds.min[k]);
    for (int k = 0; k < 3; ++k) w.f64(f.bounds.max[k]);
    w.u64(f.levels.size());
    for (const auto& level : f.levels) {
        for (const PlaneGrid& p : level) {
            w.i32(p.axes[0]);
            w.i32(p.axes[1]);
            w.i32(p.scale);
            w.i32(p.channels);
            w.i32(p.rows);
            w.i32(p.cols);
            w.doubles(p.data);
        }
    }
    w.mlp(f.fusion);
    return w;
}

HexPlaneField decode_field(Reader& r) {
    HexPlaneField f;
    f.config = decode_field_config(r);
    for (int k = 0; k < 3; ++k) f.bounds.min[k] = r.f64();
    for (int k = 0; k < 3; ++k) f.bounds.max[k] = r.f64();
    const std::size_t levels = r.count(6 * 32);
    for (std::size_t l = 0; l < levels; ++l) {
        std::array<PlaneGrid, 6> planes;
        for (PlaneGrid& p : planes) {
            p.axes[0] = r.i32();
            p.axes[1] = r.i32();
            p.scale = r.i32();
            p.channels = r.i32();
            p.rows = r.i32();
            p.cols = r.i32();
            p.data = r.doubles();
        }
        f.levels.push_back(std::move(planes));
    }
    f.fusion = r.mlp();
    return f;
}

Writer encode_net(const DeformNet& n) {
    Writer w;
    w.i32(n.config.width);
    for (bool e : n.config.enabled) w.boolean(e);
    w.i32(n.sh_degree);
    for (const Mlp& h : n.heads) w.mlp(h);
    return w;
}

DeformNet decode_net(Reader& r) {
    DeformNet n;
    n.config.width = r.i32();
    for (bool& e : n.config.enabled) e = r.boolean();
    n.sh_degree = r.i32();
    for (Mlp& h : n.heads) h = r.mlp();
    return n;
}

Writer encode_state(const TrainState& s) {
    Writer w;
    w.u64(s.iter);
    w.u64(s.moments.size());
    for (const AdamMoments& m : s.moments) {
        w.u64(m.step);
        w.doubles(m.m);
        w.doubles(m.v);
    }
    w.doubles(s.grad_accum);
    w.u64(s.grad_count.size());
    for (std::uint64_t c : s.grad_count) w.u64(c);
    w.str(s.rng.serialize());
    w.f64(s.scene_extent);
    const Diagnostics& d = s.diagnostics;
    for (std::uint64_t v : {d.skipped_steps, d.last_skipped_iter, d.quat_violations, d.densify_events,
                            d.prune_events}) {
        w.u64(v);
    }
    return w;
}

TrainState decode_state(Reader& r) {
    TrainState s;
    s.iter = r.u64();
    const std::size_t n = r.count(24);
    for (std::size_t i = 0; i < n; ++i) {
        AdamMoments m;
        m.step = r.u64();
        m.m = r.doubles();
        m.v = r.doubles();
        if (m.m.size() != m.v.size()) r.fail("moment sizes differ");
        s.moments.push_back(std::move(m));
    }
    s.grad_accum = r.doubles();
    s.grad_count.resize(r.count(8));
    for (std::uint64_t& c : s.grad_count) c = r.u64();
    try {
        s.rng.deserialize(r.str());
    } catch (const Error&) {
        r.fail("invalid RNG state");
    }
    s.scene_extent = r.f64();
    Diagnostics& d = s.diagnostics;
    d.skipped_steps = r.u64();
    d.last_skipped_iter = r.u64();
    d.quat_violations = r.u64();
    d.densify_events = r.u64();
    d.prune_events = r.u64();
    return s;
}

} // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes().append(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    Writer conf;
    conf.str(to_config_text(ckpt.config));
    w.section(kConf, conf);
    w.section(kGaus, encode_gaussians(ckpt.model.gaussians));
    w.section(kFild, encode_field(ckpt.model.field));
    w.section(kDnet, encode_net(ckpt.model.net));
    w.section(kStat, encode_state(ckpt.state));
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(w.bytes().data()), static_cast<uInt>(w.bytes().size())));
    w.u32(crc);
    return std::move(w.bytes());
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw FormatError("not a checkpoint file (bad magic)");
    }
    if (bytes.size() < sizeof kMagic + 8) throw IntegrityError("checkpoint is truncated");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, 4);
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
    if (crc != stored) throw IntegrityError("checkpoint CRC mismatch (file truncated or corrupted)");

    Reader top(bytes.data() + sizeof kMagic, body - sizeof kMagic, "header");
    const std::uint32_t version = top.u32();
    if (version != kCheckpointVersion) {
        throw UnsupportedVersion("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    }

    Checkpoint ckpt;
    unsigned seen = 0;
    while (!top.done()) {
        const std::uint32_t t = top.u32();
        const std::size_t len = top.count(1);
        const char* start = top.position();
        top.skip(len);
        auto parse = [&](const char* name, unsigned bit, auto&& fn) {
            if (seen & bit) throw IntegrityError(std::string("checkpoint: duplicate section ") + name);
            seen |= bit;
            Reader r(start, len, name);
            fn(r);
            if (!r.done()) r.fail("trailing bytes");
        };
        if (t == kConf) {
            parse("CONF", 1, [&](Reader& r) {
                TrainConfig c;
                try {
                    apply_config_text(c, r.str());
                } catch (const Error& e) {
                    r.fail(e.what());
                }
                ckpt.config = c;
            });
        } else if (t == kGaus) {
            parse("GAUS", 2, [&](Reader& r) { ckpt.model.gaussians = decode_gaussians(r); });
        } else if (t == kFild) {
            parse("FILD", 4, [&](Reader& r) { ckpt.model.field = decode_field(r); });
        } else if (t == kDnet) {
            parse("DNET", 8, [&](Reader& r) { ckpt.model.net = decode_net(r); });
        } else if (t == kStat) {
            parse("STAT", 16, [&](Reader& r) { ckpt.state = decode_state(r); });
        }
        // Unknown sections are skipped.
    }
    if (seen != 31) throw IntegrityError("checkpoint is missing a required section");
    try {
        ckpt.model.validate();
        check_alignment(ckpt.model, ckpt.state);
    } catch (const Error& e) {
        throw IntegrityError(std::string("checkpoint payload is inconsistent: ") + e.what());
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const std::string bytes = encode_checkpoint(ckpt);
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        f.close();
        if (!f) throw Error("cannot write checkpoint " + tmp.string());
    });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path));
}

} // namespace gs4d
