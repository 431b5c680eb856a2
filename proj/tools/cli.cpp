#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "grdsr/cascade.hpp"
#include "grdsr/data_io.hpp"
#include "grdsr/degradation.hpp"
#include "grdsr/errors.hpp"
#include "grdsr/experiment.hpp"
#include "grdsr/grd_model.hpp"
#include "grdsr/log.hpp"
#include "grdsr/metrics.hpp"
#include "grdsr/params_io.hpp"
#include "grdsr/training.hpp"

namespace grdsr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Precedence, lowest first: built-in defaults, the command's section of the
// config file (--config, else $GRDSR_CONFIG), then flags given explicitly.
json load_section(const std::string& config_path, const std::string& command) {
    std::string path = config_path;
    if (path.empty()) {
        if (const char* env = std::getenv(kConfigEnv)) path = env;
    }
    if (path.empty()) return json::object();
    json file;
    try {
        file = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(std::string("cannot read config file: ") + e.what());
    }
    if (!file.is_object()) throw ConfigError("config file '" + path + "' must hold a JSON object");
    if (!file.contains(command)) return json::object();
    if (!file.at(command).is_object()) throw ConfigError("config section '" + command + "' must be an object");
    return file.at(command);
}

json resolve(json defaults, const std::string& config_path, const std::string& command, const json& flags) {
    defaults.merge_patch(load_section(config_path, command));
    defaults.merge_patch(flags);
    return defaults;
}

template <class T>
T get(const json& section, const std::string& key) {
    try {
        return section.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

std::string required_path(const json& section, const std::string& key) {
    auto p = get<std::string>(section, key);
    if (p.empty()) throw ConfigError("missing required setting '" + key + "'");
    return p;
}

void refuse_overwrite(const std::vector<fs::path>& paths, bool force) {
    if (force) return;
    for (const auto& p : paths) {
        if (fs::exists(p)) throw ConfigError("refusing to overwrite '" + p.string() + "' (pass --force)");
    }
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + suffix);
}

// Written as {command: section} so it can be passed straight back via --config.
void write_effective_config(const fs::path& path, const std::string& command, const json& section) {
    write_file_atomic(path, json{{command, section}}.dump(2) + "\n");
}

std::vector<std::size_t> slice_indices(const json& section, std::size_t depth) {
    auto slices = get<std::vector<std::size_t>>(section, "slices");
    if (slices.empty()) {
        for (std::size_t z = 0; z < depth; ++z) slices.push_back(z);
    }
    for (std::size_t z : slices) {
        if (z >= depth) throw ConfigError("slice " + std::to_string(z) + " beyond volume depth " + std::to_string(depth));
    }
    return slices;
}

// Flags that were actually given become a JSON patch.
struct FlagPatch {
    json patch = json::object();
    std::vector<std::function<void()>> setters;

    template <class T>
    void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app->add_option(flag, *value, help);
        setters.push_back([this, opt, value, key] {
            if (opt->count() > 0) patch[json::json_pointer(key)] = *value;
        });
    }
    void add_switch(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        CLI::Option* opt = app->add_flag(flag, help);
        setters.push_back([this, opt, key] {
            if (opt->count() > 0) patch[json::json_pointer(key)] = true;
        });
    }
    const json& collect() {
        for (auto& s : setters) s();
        return patch;
    }
};

struct Common {
    std::string config;
    bool force = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, std::string("JSON config file (default: $") + kConfigEnv + ")");
    app->add_flag("--force", c.force, "overwrite existing outputs");
}

// ---- phantom ----

int cmd_phantom(const Common& common, const json& flags, std::ostream& out) {
    // PhantomSpec keeps extents in one array, so the extent flags are applied by hand.
    json patch = flags;
    const json extents = patch.value("extents", json::object());
    patch.erase("extents");
    json defaults = {{"output", ""}, {"phantom", PhantomSpec{}}};
    json cfg = resolve(defaults, common.config, "phantom", patch);
    const fs::path dir = required_path(cfg, "output");
    PhantomSpec spec = get<PhantomSpec>(cfg, "phantom");
    spec.width = extents.value("width", spec.width);
    spec.height = extents.value("height", spec.height);
    spec.depth = extents.value("depth", spec.depth);
    cfg["phantom"] = spec;
    spec.validate(); // before anything touches the disk

    const fs::path target = dir / "target.json", guide = dir / "guide.json";
    const fs::path manifest = dir / "manifest.json", config = dir / "config.json";
    refuse_overwrite({target, guide, manifest, config}, common.force);

    const PhantomPair pair = generate_phantom_pair(spec);
    fs::create_directories(dir);
    write_volume(target, pair.modality_a, {{"modality", "target"}, {"seed", spec.seed}});
    write_volume(guide, pair.modality_b, {{"modality", "guide"}, {"seed", spec.seed}});
    const json m = {{"seeds", {spec.seed}},
                    {"spec", spec},
                    {"volumes", {{"target", target.filename().string()}, {"guide", guide.filename().string()}}}};
    write_file_atomic(manifest, m.dump(2) + "\n");
    write_effective_config(config, "phantom", cfg);
    out << "wrote " << target.string() << " and " << guide.string() << '\n';
    return kOk;
}

// ---- degrade ----

int cmd_degrade(const Common& common, const json& flags, std::ostream& out) {
    json defaults = {{"input", ""}, {"output", ""}, {"scale", 2.0}, {"dump_kernel", ""}};
    const json cfg = resolve(defaults, common.config, "degrade", flags);
    const fs::path input = required_path(cfg, "input");
    const fs::path output = required_path(cfg, "output");
    const auto s = get<double>(cfg, "scale");
    const DegradationSpec spec = DegradationSpec::for_test(s);
    const std::string dump = get<std::string>(cfg, "dump_kernel");

    std::vector<fs::path> outputs{output, payload_path_for(output), sibling(output, ".config.json")};
    if (!dump.empty()) outputs.emplace_back(dump);
    refuse_overwrite(outputs, common.force);

    const Volume hr = read_volume(input);
    std::vector<ImagePlane> planes;
    for (std::size_t z = 0; z < hr.depth; ++z) planes.push_back(degrade(hr.slice(z), spec));
    Volume lr = stack_slices(planes, hr.dz);
    lr.dx = hr.dx * static_cast<double>(hr.width) / static_cast<double>(lr.width);
    lr.dy = hr.dy * static_cast<double>(hr.height) / static_cast<double>(lr.height);

    write_volume(output, lr,
                 {{"scale", s}, {"sigma", spec.sigma}, {"kernel_radius", spec.kernel_radius}, {"source", input.string()}});
    if (!dump.empty()) write_file_atomic(dump, spec.kernel().to_text());
    write_effective_config(sibling(output, ".config.json"), "degrade", cfg);
    out << "degraded " << hr.width << 'x' << hr.height << " -> " << lr.width << 'x' << lr.height << " (s=" << s
        << ", sigma=" << spec.sigma << ")\n";
    return kOk;
}

// ---- train ----

json train_defaults() {
    TrainConfig tc;
    tc.checkpoint_interval = 100;
    return {{"regime", "external_guided"},
            {"targets", json::array()},
            {"guides", json::array()},
            {"slices", json::array()},
            {"scale", 2.0},
            {"stages", 0}, // 0: 1 for supervised regimes, 3 otherwise
            {"lambda", 2.0},
            {"seed", 1},
            {"output", ""},
            {"network", GrdConfig{}},
            {"train", tc},
            {"augmentation", nullptr}}; // null: regime default
}

std::vector<ImagePlane> read_slices(const std::vector<std::string>& paths, const json& cfg) {
    std::vector<ImagePlane> planes;
    for (const auto& p : paths) {
        const Volume v = read_volume(p);
        for (std::size_t z : slice_indices(cfg, v.depth)) planes.push_back(v.slice(z));
    }
    return planes;
}

int cmd_train(const Common& common, const json& flags, std::ostream& out) {
    json cfg = resolve(train_defaults(), common.config, "train", flags);
    const Regime regime = regime_from_string(get<std::string>(cfg, "regime"));
    const bool guided = regime_is_guided(regime);
    const bool supervised = regime_uses_true_hr(regime);
    const bool internal = regime == Regime::Internal || regime == Regime::InternalGuided;

    if (get<std::size_t>(cfg, "stages") == 0) cfg["stages"] = supervised ? 1 : 3;
    if (cfg.at("augmentation").is_null()) {
        cfg["augmentation"] = supervised ? AugmentationSpec::right_angles_and_flip() : AugmentationSpec{};
    }
    const auto targets = get<std::vector<std::string>>(cfg, "targets");
    const auto guides = get<std::vector<std::string>>(cfg, "guides");
    const auto s = get<double>(cfg, "scale");
    const auto stages = get<std::size_t>(cfg, "stages");
    const auto seed = get<std::uint64_t>(cfg, "seed");
    const fs::path output = required_path(cfg, "output");
    GrdConfig net_cfg = get<GrdConfig>(cfg, "network");
    TrainConfig tc = get<TrainConfig>(cfg, "train");
    tc.seed = seed;
    cfg["train"] = tc;
    const AugmentationSpec aug = get<AugmentationSpec>(cfg, "augmentation");

    if (targets.empty()) throw ConfigError("train needs at least one --target volume");
    if (internal && targets.size() != 1) throw ConfigError("internal regimes learn from exactly one target volume");
    if (guided && guides.size() != targets.size()) throw ConfigError("guided regimes need one --guide per --target");
    if (!guided) net_cfg.guide_channels = 0;
    net_cfg.validate();
    tc.validate();
    aug.validate();
    const DegradationSpec spec = training_degradation(s, stages, get<double>(cfg, "lambda"));

    const fs::path loss_csv = sibling(output, ".loss.csv"), ckpt = sibling(output, ".ckpt");
    const fs::path config_out = sibling(output, ".config.json");
    refuse_overwrite({output, loss_csv, ckpt, config_out}, common.force);

    const std::vector<ImagePlane> images = read_slices(targets, cfg);
    const std::vector<ImagePlane> guide_images = guided ? read_slices(guides, cfg) : std::vector<ImagePlane>{};
    const std::vector<ImagePlane>* g = guided ? &guide_images : nullptr;

    std::vector<TrainingPair> pairs;
    if (supervised) {
        pairs = make_supervised_pairs(images, g, spec, aug);
    } else if (internal) {
        for (std::size_t k = 0; k < images.size(); ++k) {
            auto p = make_internal_pairs(images[k], guided ? &guide_images[k] : nullptr, spec, aug);
            pairs.insert(pairs.end(), std::make_move_iterator(p.begin()), std::make_move_iterator(p.end()));
        }
    } else {
        pairs = make_external_unsupervised_pairs(images, g, spec, aug);
    }

    GrdNetwork net = build_network(net_cfg, seed);
    net.stage_factor = std::pow(s, 1.0 / static_cast<double>(stages));
    net.regime = to_string(regime);

    TrainHooks hooks;
    hooks.on_checkpoint = [&](const GrdNetwork& n, std::size_t) { save_network(ckpt, n); };
    write_effective_config(config_out, "train", cfg);
    const TrainResult result = train(net, pairs, tc, hooks);
    write_file_atomic(loss_csv, loss_history_csv(result.history));
    if (result.stop_reason == StopReason::NonFinite) {
        save_network(ckpt, net); // last good parameters
        throw NumericalError("training diverged: " + result.message);
    }
    save_network(output, net);
    out << "trained " << to_string(regime) << " on " << pairs.size() << " pairs: " << result.history.size()
        << " steps, final loss " << (result.history.empty() ? 0.0 : result.history.back().loss) << ", stop "
        << to_string(result.stop_reason) << '\n';
    return kOk;
}

// ---- sr ----

int cmd_sr(const Common& common, const json& flags, std::ostream& out) {
    json defaults = {{"models", json::array()},
                     {"input", ""},
                     {"guide", ""},
                     {"scale", 2.0},
                     {"stages", 0}, // 0: inferred from the model's stage factor
                     {"lambda", 2.0},
                     {"ibp", IbpConfig{}},
                     {"ibp_mode", to_string(IbpMode::EveryStage)},
                     {"no_ibp", false},
                     {"dump_stages", false},
                     {"output", ""}};
    json cfg = resolve(defaults, common.config, "sr", flags);
    const auto model_paths = get<std::vector<std::string>>(cfg, "models");
    if (model_paths.empty()) throw ConfigError("sr needs at least one --model");
    const fs::path input = required_path(cfg, "input");
    const fs::path output = required_path(cfg, "output");
    const auto s = get<double>(cfg, "scale");
    if (!(s > 1.0)) throw DomainError("scale must exceed 1");
    const IbpConfig ibp = get<IbpConfig>(cfg, "ibp");
    ibp.validate();
    const IbpMode mode = get<bool>(cfg, "no_ibp") ? IbpMode::Off : ibp_mode_from_string(get<std::string>(cfg, "ibp_mode"));
    const bool dump = get<bool>(cfg, "dump_stages");

    std::vector<GrdNetwork> nets;
    for (const auto& p : model_paths) nets.push_back(load_network(p));
    if (get<std::size_t>(cfg, "stages") == 0) {
        if (nets.size() > 1) {
            cfg["stages"] = nets.size();
        } else {
            const double f = nets.front().stage_factor;
            if (!(f > 1.0)) throw ConfigError("model records no stage factor; pass --stages");
            cfg["stages"] = static_cast<std::size_t>(std::max(1.0, std::round(std::log(s) / std::log(f))));
        }
    }
    const auto stages = get<std::size_t>(cfg, "stages");
    if (nets.size() != 1 && nets.size() != stages) {
        throw ConfigError("expected 1 or " + std::to_string(stages) + " models, got " + std::to_string(nets.size()));
    }
    const bool guided = nets.front().guided();
    for (const auto& n : nets) {
        if (n.guided() != guided) throw ConfigError("cannot mix guided and unguided models in one cascade");
    }
    const std::string guide_path = get<std::string>(cfg, "guide");
    if (guided && guide_path.empty()) throw ConfigError("guided model needs --guide");

    const fs::path trace = sibling(output, ".ibp.csv"), config_out = sibling(output, ".config.json");
    std::vector<fs::path> outputs{output, payload_path_for(output), trace, config_out};
    for (std::size_t k = 1; dump && k <= stages; ++k) outputs.push_back(sibling(output, ".stage" + std::to_string(k) + ".json"));
    refuse_overwrite(outputs, common.force);

    const Volume lr = read_volume(input);
    Volume guide;
    if (guided) {
        guide = read_volume(guide_path);
        if (guide.depth != lr.depth) throw DataError("guide and input differ in slice count");
    }

    std::vector<ImagePlane> result_planes;
    std::vector<std::vector<ImagePlane>> stage_planes(stages);
    std::ostringstream csv;
    csv.precision(10);
    csv << "slice,refinement,iteration,residual,best_residual\n";
    for (std::size_t z = 0; z < lr.depth; ++z) {
        const ImagePlane y = lr.slice(z);
        const CascadePlan plan = plan_stages(s, stages, y.width, y.height, get<double>(cfg, "lambda"));
        const ImagePlane guide_plane = guided ? guide.slice(z) : ImagePlane{};
        CascadeOutput o = cascade_super_resolve(nets, y, guided ? &guide_plane : nullptr, plan, ibp, mode);
        if (!o.image.all_finite()) throw NumericalError("non-finite output on slice " + std::to_string(z));
        for (std::size_t k = 0; k < o.ibp.size(); ++k) {
            for (std::size_t t = 0; t < o.ibp[k].residuals.size(); ++t) {
                csv << z << ',' << k << ',' << t << ',' << o.ibp[k].residuals[t] << ',' << o.ibp[k].best_residuals[t]
                    << '\n';
            }
        }
        for (std::size_t k = 0; k < stages; ++k) stage_planes[k].push_back(std::move(o.stages[k]));
        result_planes.push_back(std::move(o.image));
    }

    const json meta = {{"scale", s}, {"stages", stages}, {"ibp_mode", to_string(mode)}, {"source", input.string()}};
    Volume sr = stack_slices(result_planes, lr.dz);
    sr.dx = lr.dx * static_cast<double>(lr.width) / static_cast<double>(sr.width);
    sr.dy = lr.dy * static_cast<double>(lr.height) / static_cast<double>(sr.height);
    write_volume(output, sr, meta);
    for (std::size_t k = 0; dump && k < stages; ++k) {
        json m = meta;
        m["stage"] = k + 1;
        write_volume(sibling(output, ".stage" + std::to_string(k + 1) + ".json"), stack_slices(stage_planes[k], lr.dz), m);
    }
    write_file_atomic(trace, csv.str());
    write_effective_config(config_out, "sr", cfg);
    out << "super-resolved " << lr.width << 'x' << lr.height << " -> " << sr.width << 'x' << sr.height << " in "
        << stages << " stage(s), ibp " << to_string(mode) << '\n';
    return kOk;
}

// ---- eval ----

int cmd_eval(const Common& common, const json& flags, std::ostream& out) {
    json defaults = {{"sr", ""},      {"gt", ""},        {"range", nullptr}, {"border", 0},
                     {"slices", json::array()}, {"method", "sr"}, {"scale", 2.0}, {"output", ""}};
    const json cfg = resolve(defaults, common.config, "eval", flags);
    const fs::path sr_path = required_path(cfg, "sr");
    const fs::path gt_path = required_path(cfg, "gt");
    const fs::path output = required_path(cfg, "output");
    std::optional<double> range;
    if (!cfg.at("range").is_null()) range = get<double>(cfg, "range");
    const auto border = get<std::size_t>(cfg, "border");
    const fs::path config_out = sibling(output, ".config.json");
    refuse_overwrite({output, config_out}, common.force);

    const Volume sr = read_volume(sr_path);
    const Volume gt = read_volume(gt_path);
    if (sr.width != gt.width || sr.height != gt.height || sr.depth != gt.depth) {
        throw DataError("estimate and ground truth differ in extents");
    }
    std::vector<SliceMetrics> rows;
    for (std::size_t z : slice_indices(cfg, gt.depth)) rows.push_back({z, evaluate(sr.slice(z), gt.slice(z), range, border)});
    write_file_atomic(output, metrics_csv(rows));
    write_effective_config(config_out, "eval", cfg);

    const MetricReport mean = mean_report(rows);
    std::ostringstream scale;
    scale << get<double>(cfg, "scale") << 'x';
    out << std::left << std::setw(20) << "method" << std::setw(8) << "scale" << std::right << std::setw(10) << "PSNR"
        << std::setw(10) << "SSIM" << '\n';
    out << std::left << std::setw(20) << method_label(get<std::string>(cfg, "method")) << std::setw(8) << scale.str()
        << std::right << std::setw(10) << std::fixed << std::setprecision(3) << mean.psnr_db << std::setw(10)
        << std::setprecision(4) << mean.ssim << '\n';
    return kOk;
}

// ---- experiment ----

int cmd_experiment(const Common& common, const json& flags, std::ostream& out) {
    json defaults = {{"output", ""}, {"experiment", ExperimentConfig{}}};
    const json cfg = resolve(defaults, common.config, "experiment", flags);
    const fs::path dir = required_path(cfg, "output");
    const ExperimentConfig ec = get<ExperimentConfig>(cfg, "experiment");
    ec.validate();
    const fs::path metrics = dir / "metrics.csv", report = dir / "report.txt", config = dir / "config.json";
    refuse_overwrite({metrics, report, config}, common.force);

    const ExperimentResult r = run_experiment(ec);
    fs::create_directories(dir);
    const std::string text = experiment_report(r, ec);
    write_file_atomic(metrics, experiment_metrics_csv(r));
    write_file_atomic(report, text);
    write_effective_config(config, "experiment", cfg);
    out << text;
    return kOk;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Guided unsupervised super-resolution"};
    app.require_subcommand(1);
    Common common;

    FlagPatch phantom_flags, degrade_flags, train_flags, sr_flags, eval_flags, experiment_flags;

    auto* phantom = app.add_subcommand("phantom", "write a registered target/guide phantom pair");
    add_common(phantom, common);
    phantom_flags.add<std::string>(phantom, "-o,--output", "/output", "output directory");
    phantom_flags.add<std::uint64_t>(phantom, "--seed", "/phantom/seed", "phantom seed");
    phantom_flags.add<std::size_t>(phantom, "--width", "/extents/width", "width in voxels");
    phantom_flags.add<std::size_t>(phantom, "--height", "/extents/height", "height in voxels");
    phantom_flags.add<std::size_t>(phantom, "--depth", "/extents/depth", "number of slices");

    auto* degrade_cmd = app.add_subcommand("degrade", "simulate an observed low-resolution volume");
    add_common(degrade_cmd, common);
    degrade_flags.add<std::string>(degrade_cmd, "-i,--input", "/input", "high-resolution volume");
    degrade_flags.add<std::string>(degrade_cmd, "-o,--output", "/output", "output volume header");
    degrade_flags.add<double>(degrade_cmd, "-s,--scale", "/scale", "downsampling factor");
    degrade_flags.add<std::string>(degrade_cmd, "--dump-kernel", "/dump_kernel", "write the blur kernel as text");

    auto* train_cmd = app.add_subcommand("train", "train a network");
    add_common(train_cmd, common);
    train_flags.add<std::string>(train_cmd, "--regime", "/regime", "training regime");
    train_flags.add<std::vector<std::string>>(train_cmd, "--target", "/targets", "training volume(s)");
    train_flags.add<std::vector<std::string>>(train_cmd, "--guide", "/guides", "guide volume(s), one per target");
    train_flags.add<std::vector<std::size_t>>(train_cmd, "--slices", "/slices", "slice indices (default all)");
    train_flags.add<double>(train_cmd, "-s,--scale", "/scale", "total magnification");
    train_flags.add<std::size_t>(train_cmd, "--stages", "/stages", "cascade stages");
    train_flags.add<double>(train_cmd, "--lambda", "/lambda", "intermediate blur sharpness");
    train_flags.add<std::uint64_t>(train_cmd, "--seed", "/seed", "initialisation and sampling seed");
    train_flags.add<std::size_t>(train_cmd, "--max-steps", "/train/max_steps", "optimizer step limit");
    train_flags.add<std::string>(train_cmd, "-o,--output", "/output", "model file");

    auto* sr_cmd = app.add_subcommand("sr", "super-resolve a volume");
    add_common(sr_cmd, common);
    sr_flags.add<std::vector<std::string>>(sr_cmd, "-m,--model", "/models", "model file (one shared or one per stage)");
    sr_flags.add<std::string>(sr_cmd, "-i,--input", "/input", "low-resolution volume");
    sr_flags.add<std::string>(sr_cmd, "--guide", "/guide", "high-resolution guide volume");
    sr_flags.add<double>(sr_cmd, "-s,--scale", "/scale", "total magnification");
    sr_flags.add<std::size_t>(sr_cmd, "--stages", "/stages", "cascade stages");
    sr_flags.add<double>(sr_cmd, "--lambda", "/lambda", "intermediate blur sharpness");
    sr_flags.add<std::string>(sr_cmd, "--ibp-mode", "/ibp_mode", "every_stage, final_only or off");
    sr_flags.add_switch(sr_cmd, "--no-ibp", "/no_ibp", "skip back-projection");
    sr_flags.add_switch(sr_cmd, "--dump-stages", "/dump_stages", "write every stage's estimate");
    sr_flags.add<std::string>(sr_cmd, "-o,--output", "/output", "output volume header");

    auto* eval_cmd = app.add_subcommand("eval", "score an estimate against ground truth");
    add_common(eval_cmd, common);
    eval_flags.add<std::string>(eval_cmd, "--sr", "/sr", "estimated volume");
    eval_flags.add<std::string>(eval_cmd, "--gt", "/gt", "ground-truth volume");
    eval_flags.add<double>(eval_cmd, "--range", "/range", "dynamic range (default max of ground truth)");
    eval_flags.add<std::size_t>(eval_cmd, "--border", "/border", "pixels dropped at each edge");
    eval_flags.add<std::vector<std::size_t>>(eval_cmd, "--slices", "/slices", "slice indices (default all)");
    eval_flags.add<std::string>(eval_cmd, "--method", "/method", "row label");
    eval_flags.add<double>(eval_cmd, "-s,--scale", "/scale", "magnification shown in the table");
    eval_flags.add<std::string>(eval_cmd, "-o,--output", "/output", "metrics CSV");

    auto* exp_cmd = app.add_subcommand("experiment", "run the comparison matrix on phantoms");
    add_common(exp_cmd, common);
    experiment_flags.add<std::string>(exp_cmd, "-o,--output", "/output", "output directory");
    experiment_flags.add<std::vector<std::uint64_t>>(exp_cmd, "--seeds", "/experiment/seeds", "run seeds");
    experiment_flags.add<std::vector<std::string>>(exp_cmd, "--methods", "/experiment/methods", "methods to compare");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    LogSink previous = set_log_sink([&err](LogLevel level, const std::string& msg) {
        err << (level == LogLevel::Warning ? "warning: " : "") << msg << '\n';
    });
    struct Restore {
        LogSink& sink;
        ~Restore() { set_log_sink(std::move(sink)); }
    } restore{previous};

    try {
        if (*phantom) return cmd_phantom(common, phantom_flags.collect(), out);
        if (*degrade_cmd) return cmd_degrade(common, degrade_flags.collect(), out);
        if (*train_cmd) return cmd_train(common, train_flags.collect(), out);
        if (*sr_cmd) return cmd_sr(common, sr_flags.collect(), out);
        if (*eval_cmd) return cmd_eval(common, eval_flags.collect(), out);
        if (*exp_cmd) return cmd_experiment(common, experiment_flags.collect(), out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return kConfigError;
}

} // namespace grdsr::cli
