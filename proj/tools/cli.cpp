#include "cli.hpp"

#include "gs4d/bench.hpp"
#include "gs4d/checkpoint.hpp"
#include "gs4d/config.hpp"
#include "gs4d/dataset.hpp"
#include "gs4d/error.hpp"
#include "gs4d/io_util.hpp"
#include "gs4d/metrics.hpp"
#include "gs4d/parallel.hpp"
#include "gs4d/ply.hpp"
#include "gs4d/synth.hpp"
#include "gs4d/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>

namespace gs4d::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Options {
    int threads = -1;

    // synth
    std::uint64_t seed = 7;
    std::size_t train_frames = 32;
    std::size_t test_frames = 8;
    int size = 64;

    // shared paths
    std::string data;
    std::string out;
    std::vector<std::string> checkpoints;

    // train
    std::string config_file;
    std::vector<std::string> settings;
    std::optional<std::uint64_t> train_seed;
    std::optional<std::uint64_t> iters;
    std::optional<std::uint64_t> until;
    std::string resume;

    // render, eval, compose
    std::string split = "test";
    std::vector<std::size_t> views;
    std::optional<double> time;
    bool canonical = false;

    // bench
    std::vector<std::size_t> counts{1000, 4000, 16000};
    int repeat = 5;
};

void write_text(const fs::path& path, const std::string& text) {
    atomic_write(path, [&](const fs::path& tmp) {
        std::ofstream f(tmp, std::ios::binary);
        f << text;
        if (!f) throw Error("cannot write " + tmp.string());
    });
}

void require_dir(const std::string& path, const char* what) {
    if (!fs::is_directory(path)) throw InvalidInput(std::string(what) + " is not a directory: " + path);
}

/// Output directory must be absent or empty unless `allow_existing`.
void check_out_dir(const fs::path& dir, bool allow_existing) {
    if (!fs::exists(dir)) return;
    if (!fs::is_directory(dir)) throw InvalidInput("output path exists and is not a directory: " + dir.string());
    if (!allow_existing && !fs::is_empty(dir))
        throw InvalidInput("output directory is not empty: " + dir.string());
}

const std::vector<std::size_t>& split_indices(const Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train;
    if (split == "test") return ds.test;
    throw InvalidInput("split must be train or test, got " + split);
}

/// Dataset frames selected by split and optional view indices.
std::vector<FrameInfo> select_frames(const Dataset& ds, const Options& o) {
    const auto& idx = split_indices(ds, o.split);
    std::vector<std::size_t> chosen;
    if (o.views.empty()) {
        chosen = idx;
    } else {
        for (std::size_t v : o.views) {
            if (v >= idx.size())
                throw InvalidInput("view " + std::to_string(v) + " out of range for split " + o.split + " (" +
                                   std::to_string(idx.size()) + " views)");
            chosen.push_back(idx[v]);
        }
    }
    if (chosen.empty()) throw InvalidInput("split " + o.split + " has no frames");
    return ds.split(chosen);
}

void check_time(const std::optional<double>& t) {
    if (t && !(*t >= 0.0 && *t <= 1.0)) throw InvalidInput("--time must lie in [0, 1]");
}

std::string frame_name(const std::string& prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%03zu.png", i);
    return prefix + buf;
}

const char* phase_name(Phase p) { return p == Phase::Warmup ? "warmup" : "joint"; }

int cmd_synth(const Options& o, std::ostream& out) {
    if (o.size < 16) throw InvalidInput("--size must be at least 16");
    if (o.train_frames < 2) throw InvalidInput("--train-frames must be at least 2");
    if (o.test_frames < 1) throw InvalidInput("--test-frames must be at least 1");
    const fs::path dir(o.out);
    check_out_dir(dir, false);
    SynthSpec spec;
    spec.width = spec.height = o.size;
    spec.train_frames = o.train_frames;
    spec.test_frames = o.test_frames;
    const SynthScene scene = synth_scene(spec, o.seed);
    // Everything goes to a sibling directory that is renamed into place.
    fs::path tmp = dir;
    tmp += ".partial";
    fs::remove_all(tmp);
    try {
        write_dnerf_dataset(tmp, scene.train, scene.test);
        write_ply_points(tmp / "points3d.ply", scene.points);
        if (fs::exists(dir)) fs::remove(dir);
        fs::rename(tmp, dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
    out << json{{"out", dir.string()},
                {"train_frames", scene.train.size()},
                {"test_frames", scene.test.size()},
                {"points", scene.points.positions.size() / 3}}
               .dump()
        << "\n";
    return 0;
}

TrainConfig build_config(const Options& o) {
    TrainConfig c;
    if (!o.config_file.empty()) apply_config_text(c, read_file(o.config_file));
    for (const std::string& s : o.settings) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw InvalidInput("--set expects key=value, got " + s);
        const auto trim = [](std::string v) {
            const auto b = v.find_first_not_of(" \t");
            const auto e = v.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        apply_setting(c, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    if (o.train_seed) c.seed = *o.train_seed;
    if (o.iters) c.total_iters = *o.iters;
    c.validate();
    return c;
}

int cmd_train(const Options& o, std::ostream& out) {
    require_dir(o.data, "--data");
    const fs::path dir(o.out);
    const bool resuming = !o.resume.empty();
    if (resuming && (!o.config_file.empty() || !o.settings.empty() || o.train_seed))
        throw InvalidInput("--resume takes its configuration from the checkpoint; only --iters may change");

    const Dataset ds = load_dnerf_dataset(o.data);
    Checkpoint ck;
    Model model;
    TrainState state;
    TrainConfig config;
    if (resuming) {
        ck = load_checkpoint(o.resume);
        config = ck.config;
        if (o.iters) config.total_iters = *o.iters;
        config.validate();
        model = std::move(ck.model);
        state = std::move(ck.state);
        if (state.iter > config.total_iters) throw InvalidInput("checkpoint is past --iters");
    } else {
        config = build_config(o);
    }
    const std::uint64_t stop = std::min(o.until.value_or(config.total_iters), config.total_iters);
    if (stop < state.iter) throw InvalidInput("--until is before the checkpoint iteration");
    const std::vector<Frame> frames = load_frames(ds.split(ds.train), config.background);
    if (frames.empty()) throw InvalidInput("dataset has no training frames");
    if (!resuming) {
        TrainingStart s = start_training(config, frames, ds.points ? &*ds.points : nullptr, ds.bounds);
        model = std::move(s.model);
        state = std::move(s.state);
    }
    if (resuming) {
        model.validate();
        check_alignment(model, state);
    }
    check_out_dir(dir, resuming);

    fs::create_directories(dir);
    write_text(dir / "config.txt", to_config_text(config));
    std::ofstream log(dir / "train_log.jsonl", resuming ? std::ios::app : std::ios::trunc);
    if (!log) throw Error("cannot write " + (dir / "train_log.jsonl").string());

    const auto t0 = std::chrono::steady_clock::now();
    while (state.iter < stop) {
        const StepResult r = train_step(model, state, frames, config);
        const bool last = state.iter == stop;
        if ((config.log_interval > 0 && r.iter % config.log_interval == 0) || last) {
            const Frame& f = frames[r.iter % frames.size()];
            const bool deformed = r.phase == Phase::Joint;
            const double p = psnr(render_model(model, f.camera, f.time, config.background, deformed).rgb, f.image);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            const json line{{"iter", r.iter},   {"phase", phase_name(r.phase)}, {"loss", r.loss},
                            {"l1", r.l1},       {"tv", r.tv},                   {"psnr", p},
                            {"gaussians", r.gaussians}, {"skipped", r.skipped}, {"seconds", secs}};
            log << line.dump() << "\n";
            log.flush();
            out << line.dump() << "\n";
        }
        if (config.checkpoint_interval > 0 && state.iter % config.checkpoint_interval == 0 && !last) {
            char name[40];
            std::snprintf(name, sizeof name, "checkpoint_%06llu.ckpt", static_cast<unsigned long long>(state.iter));
            save_checkpoint(dir / name, Checkpoint{config, model, state});
        }
    }
    save_checkpoint(dir / "checkpoint.ckpt", Checkpoint{config, model, state});
    atomic_write(dir / "gaussians.ply", [&](const fs::path& tmp) { write_ply_gaussians(tmp, model.gaussians); });
    return 0;
}

int cmd_render(const Options& o, std::ostream& out) {
    check_time(o.time);
    require_dir(o.data, "--data");
    if (o.checkpoints.size() != 1) throw InvalidInput("render takes exactly one --checkpoint");
    const Checkpoint ck = load_checkpoint(o.checkpoints[0]);
    const Dataset ds = load_dnerf_dataset(o.data);
    const std::vector<FrameInfo> frames = select_frames(ds, o);
    const fs::path dir(o.out);
    check_out_dir(dir, true);

    std::vector<Image> images;
    for (const FrameInfo& f : frames)
        images.push_back(
            render_model(ck.model, f.camera, o.time.value_or(f.time), ck.config.background, !o.canonical).rgb);
    fs::create_directories(dir);
    json written = json::array();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const fs::path p = dir / frame_name(o.split, i);
        write_image(p, images[i]);
        written.push_back(p.string());
    }
    out << json{{"images", written}}.dump() << "\n";
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
    check_time(o.time);
    require_dir(o.data, "--data");
    if (o.checkpoints.size() != 1) throw InvalidInput("eval takes exactly one --checkpoint");
    const Checkpoint ck = load_checkpoint(o.checkpoints[0]);
    const Dataset ds = load_dnerf_dataset(o.data);
    const std::vector<Frame> frames = load_frames(select_frames(ds, o), ck.config.background);
    if (!o.out.empty() && fs::is_directory(o.out)) throw InvalidInput("--out must be a file path");

    json per = json::array();
    double sum_psnr = 0.0, sum_ssim = 0.0;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const Frame& f = frames[i];
        const Image img = render_model(ck.model, f.camera, o.time.value_or(f.time), ck.config.background).rgb;
        const double p = psnr(img, f.image);
        const double s = ssim(img, f.image);
        sum_psnr += p;
        sum_ssim += s;
        per.push_back({{"view", i}, {"time", f.time}, {"psnr", p}, {"ssim", s}});
    }
    const double n = static_cast<double>(frames.size());
    const json report{{"split", o.split},
                      {"frames", per},
                      {"mean_psnr", sum_psnr / n},
                      {"mean_ssim", sum_ssim / n},
                      {"gaussians", ck.model.gaussians.size()},
                      {"note", "LPIPS and MS-SSIM are not computed"}};
    if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
    out << report.dump() << "\n";
    return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
    require_dir(o.data, "--data");
    if (o.checkpoints.size() != 1) throw InvalidInput("bench takes exactly one --checkpoint");
    if (o.repeat < 1) throw InvalidInput("--repeat must be positive");
    if (o.counts.empty()) throw InvalidInput("--counts must not be empty");
    const Checkpoint ck = load_checkpoint(o.checkpoints[0]);
    const Dataset ds = load_dnerf_dataset(o.data);
    const std::vector<FrameInfo> frames = select_frames(ds, o);
    if (!o.out.empty() && fs::is_directory(o.out)) throw InvalidInput("--out must be a file path");

    std::vector<Camera> cams;
    std::vector<double> times;
    for (const FrameInfo& f : frames) {
        cams.push_back(f.camera);
        times.push_back(o.time.value_or(f.time));
    }
    const auto results = bench_fps(ck.model, cams, times, o.counts, o.repeat, ck.config.background, ck.config.seed);
    json arr = json::array();
    for (const BenchResult& r : results)
        arr.push_back({{"gaussians", r.gaussians},
                       {"median_seconds", r.median_seconds},
                       {"renders_per_second", r.renders_per_second}});
    const json report{{"views", cams.size()}, {"repeat", o.repeat}, {"threads", num_threads()}, {"results", arr}};
    if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
    out << report.dump() << "\n";
    return 0;
}

int cmd_compose(const Options& o, std::ostream& out) {
    if (!o.time) throw InvalidInput("compose requires --time");
    check_time(o.time);
    require_dir(o.data, "--data");
    if (o.checkpoints.size() < 2) throw InvalidInput("compose takes at least two --checkpoint");
    std::vector<Checkpoint> cks;
    for (const std::string& p : o.checkpoints) cks.push_back(load_checkpoint(p));
    const Dataset ds = load_dnerf_dataset(o.data);
    const std::vector<FrameInfo> frames = select_frames(ds, o);
    const fs::path dir(o.out);
    check_out_dir(dir, true);

    std::vector<GaussianSet> sets;
    for (const Checkpoint& ck : cks) sets.push_back(model_at(ck.model, *o.time));
    const GaussianSet merged = compose(sets);
    std::vector<Image> images;
    for (const FrameInfo& f : frames) images.push_back(render(f.camera, merged, cks[0].config.background).rgb);
    fs::create_directories(dir);
    json written = json::array();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const fs::path p = dir / frame_name("compose", i);
        write_image(p, images[i]);
        written.push_back(p.string());
    }
    out << json{{"images", written}, {"gaussians", merged.size()}}.dump() << "\n";
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Deformable Gaussian splatting for dynamic scenes", "gs4d"};
    app.require_subcommand(1);
    app.add_option("--threads", o.threads, "Worker threads (default: $GS4D_THREADS or all cores)")
        ->check(CLI::NonNegativeNumber);

    auto* synth = app.add_subcommand("synth", "Write a synthetic dynamic scene");
    synth->add_option("--out", o.out, "Output dataset directory")->required();
    synth->add_option("--seed", o.seed, "Scene seed");
    synth->add_option("--train-frames", o.train_frames, "Training views");
    synth->add_option("--test-frames", o.test_frames, "Held-out views");
    synth->add_option("--size", o.size, "Image width and height");

    auto* train = app.add_subcommand("train", "Train a model on a dataset");
    train->add_option("--data", o.data, "Dataset directory")->required();
    train->add_option("--out", o.out, "Run directory")->required();
    train->add_option("--config", o.config_file, "key = value configuration file")->check(CLI::ExistingFile);
    train->add_option("--set", o.settings, "Override one setting (key=value), repeatable");
    train->add_option("--seed", o.train_seed, "Training seed");
    train->add_option("--iters", o.iters, "Total iterations");
    train->add_option("--until", o.until, "Stop after this many iterations of the schedule");
    train->add_option("--resume", o.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

    const auto add_view_opts = [&](CLI::App* sub) {
        sub->add_option("--data", o.data, "Dataset directory")->required();
        sub->add_option("--split", o.split, "train or test")->check(CLI::IsMember({"train", "test"}));
        sub->add_option("--view", o.views, "View index within the split, repeatable");
        sub->add_option("--time", o.time, "Override the frame time");
    };

    auto* rend = app.add_subcommand("render", "Render views from a checkpoint");
    rend->add_option("--checkpoint", o.checkpoints, "Checkpoint file")->required()->check(CLI::ExistingFile);
    rend->add_option("--out", o.out, "Output image directory")->required();
    rend->add_flag("--static", o.canonical, "Render the canonical Gaussians without deformation");
    add_view_opts(rend);

    auto* eval = app.add_subcommand("eval", "Report PSNR and SSIM against dataset images");
    eval->add_option("--checkpoint", o.checkpoints, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", o.out, "Also write the JSON report to this file");
    add_view_opts(eval);

    auto* bench = app.add_subcommand("bench", "Time deform and render at several Gaussian counts");
    bench->add_option("--checkpoint", o.checkpoints, "Checkpoint file")->required()->check(CLI::ExistingFile);
    bench->add_option("--counts", o.counts, "Gaussian counts")->delimiter(',');
    bench->add_option("--repeat", o.repeat, "Timed passes per count");
    bench->add_option("--out", o.out, "Also write the JSON report to this file");
    add_view_opts(bench);

    auto* comp = app.add_subcommand("compose", "Render several trained scenes together");
    comp->add_option("--checkpoint", o.checkpoints, "Checkpoint files, repeatable")->required()->check(CLI::ExistingFile);
    comp->add_option("--out", o.out, "Output image directory")->required();
    add_view_opts(comp);

    std::vector<std::string> argv_store{"gs4d"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const std::string& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << sub->help();
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        if (o.threads >= 0) set_num_threads(o.threads);
        if (synth->parsed()) return cmd_synth(o, out);
        if (train->parsed()) return cmd_train(o, out);
        if (rend->parsed()) return cmd_render(o, out);
        if (eval->parsed()) return cmd_eval(o, out);
        if (bench->parsed()) return cmd_bench(o, out);
        if (comp->parsed()) return cmd_compose(o, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace gs4d::cli
