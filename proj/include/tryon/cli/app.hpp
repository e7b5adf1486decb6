#pragma once

// Command-line front end: gen-data, train, infer, eval, ablate.
//
// Exit codes: 0 success, 1 runtime failure, 2 argument or validation failure.
// Every command writes into a run directory (--out, which must be new or
// empty, or $TRYON_RUN_ROOT/<command>-<UTC timestamp>) and echoes its
// effective configuration there as config.json; passing that file back with
// --config and the same inputs reproduces the outputs byte for byte.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tryon/config/run_config.hpp"
#include "tryon/data/dataset.hpp"
#include "tryon/io/png.hpp"
#include "tryon/metrics/metrics.hpp"
#include "tryon/pipeline/heldout.hpp"
#include "tryon/pipeline/inference.hpp"
#include "tryon/train/trainer.hpp"

namespace tryon::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad arguments or configuration; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// ---------------------------------------------------------------- helpers

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream o;
    o << std::put_time(&tm, "%Y%m%d-%H%M%S");
    return o.str();
}

/// Creates the run directory. An explicit --out must not exist or be empty;
/// the default is a fresh timestamped directory under $TRYON_RUN_ROOT or "runs".
inline fs::path make_run_dir(const std::string& command, const std::string& out) {
    fs::path dir;
    if (!out.empty()) {
        dir = out;
        if (fs::exists(dir) && !(fs::is_directory(dir) && fs::is_empty(dir)))
            throw UsageError("--out " + dir.string() + " must be a new or empty directory");
    } else {
        const char* env = std::getenv("TRYON_RUN_ROOT");
        const fs::path root = env && *env ? fs::path(env) : fs::path("runs");
        const std::string base = command + "-" + utc_timestamp();
        dir = root / base;
        for (int k = 1; fs::exists(dir); ++k) dir = root / (base + "-" + std::to_string(k));
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory: " + ec.message(), dir.string());
    return dir;
}

inline void write_file(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open for writing", p.string());
    f << s;
    if (!f) throw IoError("write failed", p.string());
}

inline std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read", p.string());
    return {std::istreambuf_iterator<char>(f), {}};
}

inline void write_json(const fs::path& p, const json& j) { write_file(p, j.dump(2) + "\n"); }

/// Loads --config (or defaults) as a usage-level failure point.
inline config::RunConfig load_config_arg(const std::string& path) {
    if (path.empty()) return {};
    if (!fs::exists(path)) throw UsageError("config file not found: " + path);
    try {
        return config::load_run_config(path);
    } catch (const ValueError& e) {
        throw UsageError(e.what());
    }
}

/// Re-validates after flag overrides; invalid values are usage errors.
inline void validate_config(const config::RunConfig& c) {
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

inline std::pair<int, int> parse_size(const std::string& s) {
    static const std::regex re(R"((\d{1,5})x(\d{1,5}))");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw UsageError("--size must look like HxW, got '" + s + "'");
    return {std::stoi(m[1]), std::stoi(m[2])};
}

inline std::string fmt(double v) {
    std::ostringstream o;
    o << std::setprecision(9) << v;
    return o.str();
}

inline std::string loss_csv(const std::vector<train::LossRow>& rows) {
    std::string s = "step,loss,lr,mode\n";
    for (const auto& r : rows) s += std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt(r.lr) + "," + r.mode + "\n";
    return s;
}

inline double mean_of(const std::vector<train::LossRow>& rows, std::size_t first, std::size_t count) {
    double s = 0.0;
    for (std::size_t i = first; i < first + count; ++i) s += rows[i].loss;
    return s / static_cast<double>(count);
}

/// Mean loss over the first and last min(50, rows/2) rows and their ratio.
inline json loss_summary(const std::vector<train::LossRow>& rows) {
    json j{{"rows", rows.size()}};
    const std::size_t window = std::min<std::size_t>(50, rows.size() / 2);
    if (window > 0) {
        const double a = mean_of(rows, 0, window), b = mean_of(rows, rows.size() - window, window);
        j["window"] = window;
        j["first_mean"] = a;
        j["last_mean"] = b;
        j["last_over_first"] = b / a;
    }
    bool finite = true;
    for (const auto& r : rows) finite = finite && std::isfinite(r.loss);
    j["all_finite"] = finite;
    return j;
}

inline std::vector<data::TryOnSample> load_samples(const std::string& dir) {
    auto loaded = data::load_dataset(dir);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    if (loaded.samples.empty()) throw IoError("dataset has no complete samples", dir);
    return std::move(loaded.samples);
}

inline std::vector<data::TryOnSample> render_range(const data::SynthConfig& c, int first, int n) {
    std::vector<data::TryOnSample> out;
    for (int i = first; i < first + n; ++i) out.push_back(data::render_sample(c, i).sample);
    return out;
}

inline void check_sample_shapes(const std::vector<data::TryOnSample>& samples, const codec::CodecConfig& codec) {
    const int m = 2 * codec.factor;
    for (const auto& s : samples)
        require(s.person.height % m == 0 && s.person.width % m == 0, "sample ", s.sample_id, ": size ",
                s.person.height, "x", s.person.width, " is not divisible by 2*codec.factor = ", m);
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::string out, config, size;
    std::optional<int> n, first;
    std::optional<std::uint64_t> seed;
};

inline int cmd_gen_data(const GenDataArgs& a) {
    auto cfg = load_config_arg(a.config);
    auto& sy = cfg.data.synth;
    if (a.n) sy.n_samples = *a.n;
    if (a.seed) sy.seed = *a.seed;
    if (!a.size.empty()) std::tie(sy.height, sy.width) = parse_size(a.size);
    const int first = a.first.value_or(0);
    if (first < 0) throw UsageError("--first must be >= 0");
    try {
        sy.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const auto dir = make_run_dir("gen-data", a.out);
    const auto ids = data::generate_synthetic(sy, dir, first);
    write_file(dir / "config.json", config::dump(cfg));
    std::map<std::string, int> hues;
    for (int i = first; i < first + sy.n_samples; ++i)
        ++hues[std::string(kPalette[static_cast<std::size_t>(data::render_sample(sy, i).hue_index)].name)];
    std::cout << "wrote " << ids.size() << " samples (" << sy.height << "x" << sy.width << ", seed " << sy.seed
              << ", first index " << first << ") to " << dir.string() << "\n";
    for (const auto& [name, count] : hues) std::cout << "  " << name << ": " << count << "\n";
    std::cout << "manifest: " << (dir / "manifest.json").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string config, data, mode, out;
    std::optional<int> steps, base_steps;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
};

inline int cmd_train(const TrainArgs& a) {
    auto cfg = load_config_arg(a.config);
    try {
        if (!a.mode.empty()) cfg.train.trainable_mode = dit::parse_trainable_mode(a.mode);
    } catch (const ValueError& e) {
        throw UsageError(e.what());
    }
    if (a.steps) cfg.train.steps = *a.steps;
    if (a.base_steps) cfg.train.base_steps = *a.base_steps;
    if (a.seed) cfg.train.seed = *a.seed;
    if (a.lr) cfg.train.lr = *a.lr;
    validate_config(cfg);

    const auto samples = load_samples(a.data);
    check_sample_shapes(samples, cfg.codec);
    const auto dir = make_run_dir("train", a.out);
    write_file(dir / "config.json", config::dump(cfg));
    fs::create_directories(dir / "checkpoints");

    train::TrainState st = train::initial_state(cfg);
    const auto sel = dit::select_trainable(st.model, cfg.train.trainable_mode);
    const std::size_t trainable = sel.count(st.model.params());
    const std::size_t analytic = dit::analytic_trainable_count(cfg.model_config(), cfg.train.trainable_mode);
    std::cout << "samples: " << samples.size() << "\n"
              << "trainable mode: " << dit::to_string(cfg.train.trainable_mode) << "\n"
              << "trainable parameters: " << trainable << " (analytic " << analytic << ") of "
              << st.model.params().count() << "\n"
              << "effective config: " << (dir / "config.json").string() << "\n";

    std::vector<train::LossRow> base_rows, ft_rows;
    train::TrainHooks hooks;
    hooks.on_loss = [&](const train::LossRow& r) {
        (r.stage == train::Stage::base ? base_rows : ft_rows).push_back(r);
        if (r.step % 100 == 0) std::cout << to_string(r.stage) << " step " << r.step << " loss " << fmt(r.loss) << "\n";
    };
    hooks.on_checkpoint = [&](const train::TrainState& s) {
        std::ostringstream name;
        name << to_string(s.stage) << "-" << std::setw(6) << std::setfill('0') << s.step << ".ckpt";
        train::save_checkpoint(dir / "checkpoints" / name.str(), train::to_checkpoint(s));
    };
    hooks.on_message = [](const std::string& m) { std::cout << m << "\n"; };
    try {
        train::run_training(st, samples, hooks);
    } catch (...) {
        write_file(dir / "base_loss.csv", loss_csv(base_rows));
        write_file(dir / "loss.csv", loss_csv(ft_rows));
        throw;
    }
    write_file(dir / "base_loss.csv", loss_csv(base_rows));
    write_file(dir / "loss.csv", loss_csv(ft_rows));
    train::save_checkpoint(dir / "final.ckpt", train::to_checkpoint(st));
    const json summary{
        {"samples", samples.size()},
        {"trainable_mode", dit::to_string(cfg.train.trainable_mode)},
        {"trainable_parameters", trainable},
        {"analytic_trainable_parameters", analytic},
        {"total_parameters", st.model.params().count()},
        {"codec_heldout_mse", {{"initial", st.codec_report.initial_heldout_mse}, {"final", st.codec_report.final_heldout_mse}}},
        {"base_loss", loss_summary(base_rows)},
        {"finetune_loss", loss_summary(ft_rows)},
    };
    write_json(dir / "summary.json", summary);
    std::cout << "final checkpoint: " << (dir / "final.ckpt").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    std::string ckpt, config, garment, person, mask, caption, data, caption_mode, out;
    std::optional<double> guidance;
    std::optional<int> steps;
    std::optional<std::uint64_t> seed;
    bool no_paste_back = false;
    bool panel = false;
};

/// Caption files hold the garment description on line 1 and the person
/// description on line 2.
inline std::pair<std::string, std::string> read_caption_file(const fs::path& p) {
    std::istringstream in(read_file(p));
    std::string g, person;
    std::getline(in, g);
    std::getline(in, person);
    return {g, person};
}

inline int cmd_infer(const InferArgs& a) {
    const bool single = !a.garment.empty() || !a.person.empty() || !a.mask.empty();
    if (single == !a.data.empty())
        throw UsageError("give either --data or all of --garment, --person, --mask");
    if (single && (a.garment.empty() || a.person.empty() || a.mask.empty()))
        throw UsageError("single-sample inference needs --garment, --person and --mask");

    const auto ck = train::load_checkpoint(a.ckpt);
    train::TrainState st = train::from_checkpoint(ck);
    config::RunConfig cfg = st.cfg;
    if (!a.config.empty()) {
        const auto over = load_config_arg(a.config);
        cfg.infer = over.infer;
        cfg.eval = over.eval;
    }
    if (a.guidance) cfg.infer.guidance = *a.guidance;
    if (a.steps) cfg.infer.num_steps = *a.steps;
    if (a.seed) cfg.infer.seed = *a.seed;
    if (a.no_paste_back) cfg.infer.paste_back = false;
    try {
        if (!a.caption_mode.empty()) cfg.infer.caption_mode = text::parse_caption_mode(a.caption_mode);
    } catch (const ValueError& e) {
        throw UsageError(e.what());
    }
    validate_config(cfg);

    std::vector<data::TryOnSample> samples;
    if (single) {
        data::TryOnSample s;
        s.sample_id = fs::path(a.person).stem().string();
        s.garment = io::load_image(a.garment);
        s.person = io::load_image(a.person);
        s.mask = io::load_mask(a.mask);
        if (!a.caption.empty()) std::tie(s.garment_caption, s.person_caption) = read_caption_file(a.caption);
        require(s.garment.same_shape(s.person), "garment ", s.garment.shape_string(), " vs person ",
                s.person.shape_string());
        samples.push_back(std::move(s));
    } else {
        samples = load_samples(a.data);
    }
    check_sample_shapes(samples, cfg.codec);

    const auto dir = make_run_dir("infer", a.out);
    write_file(dir / "config.json", config::dump(cfg));
    write_json(dir / "inputs.json",
               {{"checkpoint", a.ckpt},
                {"inputs", single ? json{{"garment", a.garment}, {"person", a.person}, {"mask", a.mask}, {"caption", a.caption}}
                                  : json{{"data", a.data}}}});
    if (a.panel) fs::create_directories(dir / "panels");
    for (const auto& s : samples) {
        const auto caption = text::caption_for(cfg.infer.caption_mode, s.garment_caption, s.person_caption);
        const auto out = pipeline::try_on(s.garment, s.person, s.mask, caption, st.model, st.codec, st.text, cfg.infer);
        const std::string stem = single ? "result" : s.sample_id;
        io::save_image(dir / (stem + ".png"), out.image);
        if (a.panel) io::save_image(dir / "panels" / (stem + ".png"), out.panel);
    }
    std::cout << "wrote " << samples.size() << " result(s) to " << dir.string() << " (guidance " << cfg.infer.guidance
              << ", steps " << cfg.infer.num_steps << ", seed " << cfg.infer.seed << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string pred_dir, gt_dir, mask_dir, garment_dir, config, out;
};

inline int cmd_eval(const EvalArgs& a) {
    const auto cfg = load_config_arg(a.config);
    validate_config(cfg);
    for (const auto* d : {&a.pred_dir, &a.gt_dir, &a.mask_dir})
        if (!fs::is_directory(*d)) throw IoError("directory not found", *d);

    std::vector<std::string> stems, unpaired;
    for (const auto& e : fs::directory_iterator(a.pred_dir))
        if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
    std::sort(stems.begin(), stems.end());
    std::vector<ImageTensor> pred, gt, garments;
    std::vector<MaskTensor> masks;
    std::vector<std::string> ids;
    for (const auto& s : stems) {
        const fs::path g = fs::path(a.gt_dir) / (s + ".png"), m = fs::path(a.mask_dir) / (s + ".png");
        if (!fs::exists(g) || !fs::exists(m)) {
            unpaired.push_back(s);
            std::cerr << "warning: " << s << " has no ground truth or mask; skipped\n";
            continue;
        }
        pred.push_back(io::load_image(fs::path(a.pred_dir) / (s + ".png")));
        gt.push_back(io::load_image(g));
        masks.push_back(io::load_mask(m));
        ids.push_back(s);
        if (!a.garment_dir.empty()) garments.push_back(io::load_image(fs::path(a.garment_dir) / (s + ".png")));
    }
    if (ids.empty()) throw IoError("no prediction has a matching ground truth and mask", a.pred_dir);

    const metrics::FeatureExtractor fx(cfg.eval.d_feat, cfg.eval.extractor_seed);
    auto report = metrics::evaluate(pred, gt, masks, ids, fx);
    const auto dir = make_run_dir("eval", a.out);
    json j = report.to_json();
    j["unpaired"] = unpaired;
    if (!garments.empty()) {
        int hits = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) hits += pipeline::hue_match(garments[i], pred[i], masks[i]) ? 1 : 0;
        j["hue_match"] = static_cast<double>(hits) / static_cast<double>(ids.size());
    }
    write_file(dir / "config.json", config::dump(cfg));
    write_json(dir / "inputs.json", {{"pred_dir", a.pred_dir},
                                     {"gt_dir", a.gt_dir},
                                     {"mask_dir", a.mask_dir},
                                     {"garment_dir", a.garment_dir}});
    write_json(dir / "metrics.json", j);
    write_file(dir / "per_sample.csv", report.rows_csv());
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "pairs " << ids.size() << "  ssim " << fmt(report.ssim) << "  fid " << fmt(report.fid) << "  kid "
              << fmt(report.kid) << "  masked psnr " << fmt(report.masked_psnr) << "\n"
              << "report: " << (dir / "metrics.json").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
    std::string config, axis, out, data, heldout;
};

struct AblationCell {
    std::string name;
    std::string model_key;  // cells with equal keys share a fine-tuned model
    config::RunConfig cfg;  // train section for the model, infer section for evaluation
};

inline std::vector<AblationCell> ablation_cells(const config::RunConfig& base, const std::string& axis) {
    std::vector<AblationCell> cells;
    if (axis == "mode") {
        for (auto m : {dit::TrainableMode::all_attention, dit::TrainableMode::mmdit_attention,
                       dit::TrainableMode::singledit_attention}) {
            AblationCell c{std::string(dit::to_string(m)), std::string(dit::to_string(m)), base};
            c.cfg.train.trainable_mode = m;
            cells.push_back(c);
        }
    } else if (axis == "text") {
        for (auto tr : {text::CaptionMode::ordinary, text::CaptionMode::integrated})
            for (auto in : {text::CaptionMode::ordinary, text::CaptionMode::integrated}) {
                const std::string key = "train_" + std::string(text::to_string(tr));
                AblationCell c{key + "-infer_" + std::string(text::to_string(in)), key, base};
                c.cfg.train.caption_mode = tr;
                c.cfg.infer.caption_mode = in;
                cells.push_back(c);
            }
    } else if (axis == "guidance") {
        for (double g : {2.0, 3.5, 30.0}) {
            const std::string key = "train_guidance_" + fmt(g);
            AblationCell c{key, key, base};
            c.cfg.train.guidance_train = g;
            cells.push_back(c);
        }
    } else {
        throw UsageError("--axis must be mode, text or guidance, got '" + axis + "'");
    }
    return cells;
}

inline int cmd_ablate(const AblateArgs& a) {
    const auto cfg = load_config_arg(a.config);
    validate_config(cfg);
    const auto cells = ablation_cells(cfg, a.axis);
    if (a.data.empty() != a.heldout.empty()) throw UsageError("give both --data and --heldout, or neither");

    const auto& sy = cfg.data.synth;
    const auto train_set = a.data.empty() ? render_range(sy, 0, sy.n_samples) : load_samples(a.data);
    const auto held_set =
        a.heldout.empty() ? render_range(sy, sy.n_samples, cfg.data.heldout_samples) : load_samples(a.heldout);
    if (train_set.empty() || held_set.empty()) throw UsageError("ablation needs training and held-out samples");
    check_sample_shapes(train_set, cfg.codec);
    check_sample_shapes(held_set, cfg.codec);

    const auto dir = make_run_dir("ablate-" + a.axis, a.out);
    write_file(dir / "config.json", config::dump(cfg));
    std::cout << "ablation axis " << a.axis << ": " << cells.size() << " cells, " << train_set.size()
              << " training / " << held_set.size() << " held-out samples -> " << dir.string() << "\n";

    // Codec and base stage do not depend on any ablated field, so they run once.
    std::vector<train::LossRow> base_rows;
    train::TrainHooks base_hooks;
    base_hooks.on_loss = [&](const train::LossRow& r) { base_rows.push_back(r); };
    base_hooks.on_message = [](const std::string& m) { std::cout << m << "\n"; };
    train::TrainState base = train::initial_state(cfg);
    train::run_training(base, train_set, base_hooks, train::Stage::finetune);
    write_file(dir / "base_loss.csv", loss_csv(base_rows));
    train::save_checkpoint(dir / "base.ckpt", train::to_checkpoint(base));

    const metrics::FeatureExtractor fx(cfg.eval.d_feat, cfg.eval.extractor_seed);
    std::map<std::string, train::TrainState> models;
    std::map<std::string, json> model_loss;
    json table = json::array();
    std::string csv =
        "cell,trainable_mode,train_caption,infer_caption,train_guidance,infer_guidance,trainable_parameters,"
        "loss_last_over_first,ssim,fid,kid,masked_mse,masked_psnr,proxy_perceptual,hue_match,status\n";
    bool failed = false;
    for (const auto& cell : cells) {
        json row{{"cell", cell.name},
                 {"trainable_mode", dit::to_string(cell.cfg.train.trainable_mode)},
                 {"train_caption", text::to_string(cell.cfg.train.caption_mode)},
                 {"infer_caption", text::to_string(cell.cfg.infer.caption_mode)},
                 {"train_guidance", cell.cfg.train.guidance_train},
                 {"infer_guidance", cell.cfg.infer.guidance}};
        try {
            const fs::path model_dir = dir / cell.model_key;
            if (!models.count(cell.model_key)) {
                std::cout << "fine-tuning " << cell.model_key << "\n";
                train::TrainState st = base;
                st.cfg = cell.cfg;
                train::enter_stage(st, train::Stage::finetune);
                std::vector<train::LossRow> rows;
                train::TrainHooks hooks;
                hooks.on_loss = [&](const train::LossRow& r) { rows.push_back(r); };
                train::run_training(st, train_set, hooks);
                fs::create_directories(model_dir);
                write_file(model_dir / "config.json", config::dump(st.cfg));
                write_file(model_dir / "loss.csv", loss_csv(rows));
                train::save_checkpoint(model_dir / "final.ckpt", train::to_checkpoint(st));
                model_loss[cell.model_key] = loss_summary(rows);
                models.emplace(cell.model_key, std::move(st));
            }
            const auto& st = models.at(cell.model_key);
            const auto res =
                pipeline::evaluate_heldout(st.model, st.codec, st.text, held_set, cell.cfg.infer, fx);
            const fs::path cell_dir = dir / "cells" / cell.name;
            fs::create_directories(cell_dir);
            json m = res.report.to_json();
            m["hue_match"] = res.hue_rate();
            write_json(cell_dir / "metrics.json", m);
            write_file(cell_dir / "per_sample.csv", res.report.rows_csv());
            const auto& r = res.report;
            const json& ls = model_loss.at(cell.model_key);
            row["trainable_parameters"] = dit::select_trainable(st.model, cell.cfg.train.trainable_mode).count(st.model.params());
            row["loss_last_over_first"] = ls.value("last_over_first", std::nan(""));
            row.update({{"ssim", r.ssim}, {"fid", r.fid}, {"kid", r.kid}, {"masked_mse", r.masked_mse},
                        {"masked_psnr", r.masked_psnr}, {"proxy_perceptual", r.proxy_perceptual},
                        {"hue_match", res.hue_rate()}, {"status", "ok"}});
            std::cout << "  " << cell.name << ": ssim " << fmt(r.ssim) << " fid " << fmt(r.fid) << " hue match "
                      << fmt(res.hue_rate()) << "\n";
        } catch (const std::exception& e) {
            failed = true;
            row["status"] = std::string("failed: ") + e.what();
            std::cerr << "cell " << cell.name << " failed: " << e.what() << "\n";
        }
        table.push_back(row);
        auto col = [&](const char* k) -> std::string {
            if (!row.contains(k)) return "";
            const auto& v = row.at(k);
            if (v.is_string()) return v.get<std::string>();
            if (v.is_number_float()) return fmt(v.get<double>());
            return v.dump();
        };
        std::string line;
        for (const char* k : {"cell", "trainable_mode", "train_caption", "infer_caption", "train_guidance",
                              "infer_guidance", "trainable_parameters", "loss_last_over_first", "ssim", "fid", "kid",
                              "masked_mse", "masked_psnr", "proxy_perceptual", "hue_match"})
            line += col(k) + ",";
        std::string status = col("status");
        std::replace(status.begin(), status.end(), ',', ';');
        csv += line + status + "\n";
        // rewritten after every cell so partial results survive a failure
        write_file(dir / "ablation.csv", csv);
        write_json(dir / "ablation.json", {{"axis", a.axis}, {"cells", table}});
    }
    std::cout << "table: " << (dir / "ablation.csv").string() << "\n";
    return failed ? kExitRuntime : kExitOk;
}

// ---------------------------------------------------------------- entry point

inline int run(int argc, char** argv) {
    CLI::App app{"tryon: desk-scale virtual try-on with a rectified-flow transformer"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* g = app.add_subcommand("gen-data", "render a synthetic garment/person dataset");
    g->add_option("--out", gen.out, "output directory (new or empty)");
    g->add_option("--n", gen.n, "number of samples");
    g->add_option("--seed", gen.seed, "generator seed");
    g->add_option("--size", gen.size, "image size HxW, both divisible by 16");
    g->add_option("--first", gen.first, "index of the first sample (held-out sets start after the training set)");
    g->add_option("--config", gen.config, "run config JSON; its data section supplies defaults");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "fit the codec, run the base stage, then fine-tune");
    t->add_option("--data", tr.data, "dataset directory")->required();
    t->add_option("--config", tr.config, "run config JSON");
    t->add_option("--mode", tr.mode, "all_attention, mmdit_attention, singledit_attention or full");
    t->add_option("--out", tr.out, "run directory (new or empty)");
    t->add_option("--steps", tr.steps, "fine-tuning steps");
    t->add_option("--base-steps", tr.base_steps, "base-stage steps");
    t->add_option("--seed", tr.seed, "training seed");
    t->add_option("--lr", tr.lr, "fine-tuning learning rate");

    InferArgs in;
    auto* i = app.add_subcommand("infer", "generate try-on images from a checkpoint");
    i->add_option("--ckpt", in.ckpt, "checkpoint file")->required();
    i->add_option("--config", in.config, "run config JSON; only its infer and eval sections are used");
    i->add_option("--garment", in.garment, "garment PNG");
    i->add_option("--person", in.person, "person PNG");
    i->add_option("--mask", in.mask, "mask PNG (white = regenerate)");
    i->add_option("--caption", in.caption, "caption file: garment description, then person description");
    i->add_option("--data", in.data, "dataset directory (batch mode)");
    i->add_option("--guidance", in.guidance, "guidance value fed to the model");
    i->add_option("--steps", in.steps, "Euler steps");
    i->add_option("--seed", in.seed, "noise seed");
    i->add_option("--caption-mode", in.caption_mode, "integrated, ordinary or none");
    i->add_flag("--no-paste-back", in.no_paste_back, "keep decoded pixels outside the mask");
    i->add_flag("--panel", in.panel, "also write the decoded side-by-side canvas");
    i->add_option("--out", in.out, "run directory (new or empty)");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "score predictions against ground truth");
    e->add_option("--pred-dir", ev.pred_dir, "predicted PNGs")->required();
    e->add_option("--gt-dir", ev.gt_dir, "ground-truth PNGs, paired by file stem")->required();
    e->add_option("--mask-dir", ev.mask_dir, "mask PNGs, paired by file stem")->required();
    e->add_option("--garment-dir", ev.garment_dir, "garment PNGs; enables the hue-match score");
    e->add_option("--config", ev.config, "run config JSON; its eval section is used");
    e->add_option("--out", ev.out, "run directory (new or empty)");

    AblateArgs ab;
    auto* b = app.add_subcommand("ablate", "train and evaluate every value of one ablation axis");
    b->add_option("--axis", ab.axis, "mode, text or guidance")->required();
    b->add_option("--config", ab.config, "run config JSON");
    b->add_option("--data", ab.data, "training dataset directory (default: render from config)");
    b->add_option("--heldout", ab.heldout, "held-out dataset directory (default: render from config)");
    b->add_option("--out", ab.out, "run directory (new or empty)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& x) {
        return app.exit(x);
    } catch (const CLI::CallForAllHelp& x) {
        return app.exit(x);
    } catch (const CLI::ParseError& x) {
        app.exit(x);
        return kExitUsage;
    }

    try {
        if (g->parsed()) return cmd_gen_data(gen);
        if (t->parsed()) return cmd_train(tr);
        if (i->parsed()) return cmd_infer(in);
        if (e->parsed()) return cmd_eval(ev);
        if (b->parsed()) return cmd_ablate(ab);
    } catch (const UsageError& x) {
        std::cerr << "error: " << x.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& x) {
        std::cerr << "error: " << x.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace tryon::cli
