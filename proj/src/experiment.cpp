#include "grdsr/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "grdsr/errors.hpp"
#include "grdsr/log.hpp"
#include "grdsr/metrics.hpp"

namespace grdsr {

std::string method_label(const std::string& method) {
    static const std::map<std::string, std::string> labels{
        {"bicubic", "bicubic"},          {"supervised", "supervised"},     {"supervised_guided", "ours1"},
        {"external_unguided", "ours2"}, {"internal_guided", "ours3"},     {"external_guided", "ours4"},
        {"internal", "ZSSR"}};
    auto it = labels.find(method);
    return it == labels.end() ? method : it->second;
}

TrainConfig desk_train_config() {
    TrainConfig c;
    c.batch_size = 4;
    c.patch_size = 32;
    c.max_steps = 300;
    return c;
}

void ExperimentConfig::validate() const {
    if (methods.empty()) throw ConfigError("experiment lists no methods");
    for (const auto& m : methods) {
        if (m != "bicubic") regime_from_string(m);
    }
    if (seeds.empty()) throw ConfigError("experiment lists no seeds");
    if (!(scale > 1.0)) throw DomainError("experiment scale must exceed 1");
    if (supervised_stages < 1 || unsupervised_stages < 1) throw ConfigError("stage counts must be >= 1");
    phantom.validate();
    for (std::size_t z : test_slices) {
        if (z >= phantom.depth) throw ConfigError("test slice " + std::to_string(z) + " beyond phantom depth");
    }
    if (test_slices.empty()) throw ConfigError("experiment lists no test slices");
    const bool needs_external = std::any_of(methods.begin(), methods.end(), [](const std::string& m) {
        return m.starts_with("external") || m.starts_with("supervised");
    });
    if (needs_external && (external_subjects == 0 || train_slices.empty())) {
        throw ConfigError("external and supervised regimes need external subjects and train slices");
    }
    for (std::size_t z : needs_external ? train_slices : std::vector<std::size_t>{}) {
        if (z >= phantom.depth) throw ConfigError("train slice " + std::to_string(z) + " beyond phantom depth");
    }
    network.validate();
    train.validate();
    internal_train.validate();
    supervised_augmentation.validate();
    unsupervised_augmentation.validate();
    ibp.validate();
    if (dynamic_range && !(*dynamic_range > 0.0)) throw ConfigError("dynamic_range must be positive");
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& k : c.checks) checks.push_back({{"better", k.better}, {"worse", k.worse}, {"margin_db", k.margin_db}});
    j = {{"methods", c.methods},
         {"seeds", c.seeds},
         {"scale", c.scale},
         {"lambda", c.lambda},
         {"supervised_stages", c.supervised_stages},
         {"unsupervised_stages", c.unsupervised_stages},
         {"phantom", c.phantom},
         {"external_subjects", c.external_subjects},
         {"train_slices", c.train_slices},
         {"test_slices", c.test_slices},
         {"network", c.network},
         {"train", c.train},
         {"internal_train", c.internal_train},
         {"supervised_augmentation", c.supervised_augmentation},
         {"unsupervised_augmentation", c.unsupervised_augmentation},
         {"ibp", c.ibp},
         {"ibp_mode", to_string(c.ibp_mode)},
         {"dynamic_range", c.dynamic_range ? nlohmann::json(*c.dynamic_range) : nlohmann::json(nullptr)},
         {"border", c.border},
         {"checks", checks}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    c.methods = j.value("methods", c.methods);
    c.seeds = j.value("seeds", c.seeds);
    c.scale = j.value("scale", c.scale);
    c.lambda = j.value("lambda", c.lambda);
    c.supervised_stages = j.value("supervised_stages", c.supervised_stages);
    c.unsupervised_stages = j.value("unsupervised_stages", c.unsupervised_stages);
    if (j.contains("phantom")) c.phantom = j.at("phantom").get<PhantomSpec>();
    c.external_subjects = j.value("external_subjects", c.external_subjects);
    c.train_slices = j.value("train_slices", c.train_slices);
    c.test_slices = j.value("test_slices", c.test_slices);
    if (j.contains("network")) c.network = j.at("network").get<GrdConfig>();
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("internal_train")) from_json(j.at("internal_train"), c.internal_train);
    if (j.contains("supervised_augmentation")) from_json(j.at("supervised_augmentation"), c.supervised_augmentation);
    if (j.contains("unsupervised_augmentation")) from_json(j.at("unsupervised_augmentation"), c.unsupervised_augmentation);
    if (j.contains("ibp")) from_json(j.at("ibp"), c.ibp);
    if (j.contains("ibp_mode")) c.ibp_mode = ibp_mode_from_string(j.at("ibp_mode").get<std::string>());
    if (j.contains("dynamic_range")) {
        const auto& d = j.at("dynamic_range");
        c.dynamic_range = d.is_null() ? std::nullopt : std::optional<double>(d.get<double>());
    }
    c.border = j.value("border", c.border);
    if (j.contains("checks")) {
        c.checks.clear();
        for (const auto& k : j.at("checks")) {
            c.checks.push_back({k.at("better").get<std::string>(), k.at("worse").get<std::string>(),
                                k.value("margin_db", 0.0)});
        }
    }
}

DegradationSpec training_degradation(double scale, std::size_t stages, double lambda) {
    if (stages == 0) throw ConfigError("stage count must be >= 1");
    if (stages == 1) return DegradationSpec::for_test(scale);
    return DegradationSpec::for_cascade_stage(std::pow(scale, 1.0 / static_cast<double>(stages)), lambda);
}

std::uint64_t subject_seed(std::uint64_t run_seed, std::size_t subject) { return run_seed * 1000003ULL + subject; }
std::uint64_t training_seed(std::uint64_t run_seed) { return run_seed * 7919ULL + 17ULL; }

bool ExperimentResult::all_checks_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.passed; });
}

const MethodSummary* ExperimentResult::summary(const std::string& method) const {
    for (const auto& s : summaries) {
        if (s.method == method) return &s;
    }
    return nullptr;
}

namespace {

struct Subject {
    std::vector<ImagePlane> hr;    // target modality, selected slices
    std::vector<ImagePlane> guide; // guide modality at HR
    std::vector<ImagePlane> lr;    // observed target modality
    std::vector<std::size_t> slices;
};

Subject make_subject(const ExperimentConfig& c, std::uint64_t seed, const std::vector<std::size_t>& slices) {
    PhantomSpec spec = c.phantom;
    spec.seed = seed;
    const PhantomPair pair = generate_phantom_pair(spec);
    const DegradationSpec test = DegradationSpec::for_test(c.scale);
    Subject s;
    for (std::size_t z : slices) {
        s.hr.push_back(pair.modality_a.slice(z));
        s.guide.push_back(pair.modality_b.slice(z));
        s.lr.push_back(degrade(s.hr.back(), test));
        s.slices.push_back(z);
    }
    return s;
}

DegradationSpec training_spec(const ExperimentConfig& c, std::size_t stages) {
    return training_degradation(c.scale, stages, c.lambda);
}

GrdNetwork fresh_network(const ExperimentConfig& c, Regime regime, std::size_t stages, std::uint64_t seed) {
    GrdConfig cfg = c.network;
    if (!regime_is_guided(regime)) cfg.guide_channels = 0;
    GrdNetwork net = build_network(cfg, seed);
    net.stage_factor = std::pow(c.scale, 1.0 / static_cast<double>(stages));
    net.regime = to_string(regime);
    return net;
}

TrainingSummary summarize(std::uint64_t seed, const std::string& method, std::size_t slice, const TrainResult& r) {
    TrainingSummary t;
    t.seed = seed;
    t.method = method;
    t.slice = slice;
    t.steps = r.history.size();
    t.final_loss = r.history.empty() ? 0.0 : r.history.back().loss;
    t.stop_reason = r.stop_reason;
    return t;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    const bool any_external = std::any_of(config.methods.begin(), config.methods.end(), [](const std::string& m) {
        return m != "bicubic" && !m.starts_with("internal");
    });

    for (std::uint64_t seed : config.seeds) {
        const Subject test = make_subject(config, subject_seed(seed, 0), config.test_slices);
        Subject external;
        if (any_external) {
            for (std::size_t i = 1; i <= config.external_subjects; ++i) {
                Subject e = make_subject(config, subject_seed(seed, i), config.train_slices);
                for (std::size_t k = 0; k < e.hr.size(); ++k) {
                    external.hr.push_back(e.hr[k]);
                    external.guide.push_back(e.guide[k]);
                    external.lr.push_back(e.lr[k]);
                }
            }
        }
        const std::uint64_t tseed = training_seed(seed);

        auto record = [&](const std::string& method, std::size_t k, const ImagePlane& estimate) {
            const MetricReport m = evaluate(estimate, test.hr[k], config.dynamic_range, config.border);
            result.rows.push_back({seed, method, test.slices[k], m.psnr_db, m.ssim});
        };
        auto infer = [&](GrdNetwork& net, std::size_t k, std::size_t stages) {
            const CascadePlan plan = plan_stages(config.scale, stages, test.lr[k].width, test.lr[k].height, config.lambda);
            const ImagePlane* guide = net.guided() ? &test.guide[k] : nullptr;
            return cascade_super_resolve(net, test.lr[k], guide, plan, config.ibp, config.ibp_mode).image;
        };

        for (const std::string& method : config.methods) {
            log_info("experiment: seed " + std::to_string(seed) + ", " + method);
            if (method == "bicubic") {
                for (std::size_t k = 0; k < test.hr.size(); ++k) {
                    record(method, k, resample_bicubic(test.lr[k], test.hr[k].width, test.hr[k].height));
                }
                continue;
            }
            const Regime regime = regime_from_string(method);
            const bool guided = regime_is_guided(regime);
            if (regime == Regime::Internal || regime == Regime::InternalGuided) {
                const std::size_t stages = config.unsupervised_stages;
                for (std::size_t k = 0; k < test.hr.size(); ++k) {
                    const auto pairs = make_internal_pairs(test.lr[k], guided ? &test.guide[k] : nullptr,
                                                           training_spec(config, stages), config.unsupervised_augmentation);
                    GrdNetwork net = fresh_network(config, regime, stages, tseed);
                    TrainConfig tc = config.internal_train;
                    tc.seed = tseed;
                    const TrainResult tr = train(net, pairs, tc);
                    result.training.push_back(summarize(seed, method, test.slices[k], tr));
                    record(method, k, infer(net, k, stages));
                }
                continue;
            }
            const bool supervised = regime_uses_true_hr(regime);
            const std::size_t stages = supervised ? config.supervised_stages : config.unsupervised_stages;
            const DegradationSpec spec = training_spec(config, stages);
            const auto pairs =
                supervised ? make_supervised_pairs(external.hr, guided ? &external.guide : nullptr, spec,
                                                   config.supervised_augmentation)
                           : make_external_unsupervised_pairs(external.lr, guided ? &external.guide : nullptr, spec,
                                                              config.unsupervised_augmentation);
            GrdNetwork net = fresh_network(config, regime, stages, tseed);
            TrainConfig tc = config.train;
            tc.seed = tseed;
            const TrainResult tr = train(net, pairs, tc);
            result.training.push_back(summarize(seed, method, 0, tr));
            for (std::size_t k = 0; k < test.hr.size(); ++k) record(method, k, infer(net, k, stages));
        }
    }

    for (const std::string& method : config.methods) {
        MethodSummary s;
        s.method = method;
        for (std::uint64_t seed : config.seeds) {
            double p = 0.0, q = 0.0;
            std::size_t n = 0;
            for (const auto& r : result.rows) {
                if (r.seed == seed && r.method == method) {
                    p += r.psnr_db;
                    q += r.ssim;
                    ++n;
                }
            }
            s.seed_psnr.push_back(p / static_cast<double>(n));
            s.mean_psnr += p / static_cast<double>(n);
            s.mean_ssim += q / static_cast<double>(n);
        }
        s.mean_psnr /= static_cast<double>(config.seeds.size());
        s.mean_ssim /= static_cast<double>(config.seeds.size());
        result.summaries.push_back(std::move(s));
    }
    std::stable_sort(result.summaries.begin(), result.summaries.end(),
                     [](const MethodSummary& a, const MethodSummary& b) { return a.mean_psnr > b.mean_psnr; });

    for (const auto& check : config.checks) {
        const MethodSummary* better = result.summary(check.better);
        const MethodSummary* worse = result.summary(check.worse);
        if (!better || !worse) continue;
        CheckOutcome o;
        o.check = check;
        o.better_psnr = better->mean_psnr;
        o.worse_psnr = worse->mean_psnr;
        o.passed = better->mean_psnr - worse->mean_psnr > check.margin_db;
        for (std::size_t i = 0; i < config.seeds.size(); ++i) {
            if (!(better->seed_psnr[i] - worse->seed_psnr[i] > check.margin_db)) o.seed_violations.push_back(config.seeds[i]);
        }
        result.checks.push_back(std::move(o));
    }
    return result;
}

std::string experiment_metrics_csv(const ExperimentResult& r) {
    std::ostringstream os;
    os.precision(10);
    os << "seed,method,label,slice,psnr_db,ssim\n";
    for (const auto& row : r.rows) {
        os << row.seed << ',' << row.method << ',' << method_label(row.method) << ',' << row.slice << ','
           << format_psnr(row.psnr_db) << ',' << row.ssim << '\n';
    }
    for (const auto& s : r.summaries) {
        os << "all," << s.method << ',' << method_label(s.method) << ",mean," << format_psnr(s.mean_psnr) << ','
           << s.mean_ssim << '\n';
    }
    return os.str();
}

std::string experiment_report(const ExperimentResult& r, const ExperimentConfig& config) {
    std::ostringstream os;
    os << std::fixed;
    std::ostringstream scale;
    scale << config.scale << 'x';
    os << std::left << std::setw(6) << "rank" << std::setw(20) << "method" << std::setw(10) << "label"
       << std::setw(8) << "scale" << std::right << std::setw(10) << "PSNR" << std::setw(10) << "SSIM" << '\n';
    std::size_t rank = 1;
    for (const auto& s : r.summaries) {
        os << std::left << std::setw(6) << rank++ << std::setw(20) << s.method << std::setw(10)
           << method_label(s.method) << std::setw(8) << scale.str() << std::right << std::setw(10)
           << std::setprecision(3) << s.mean_psnr << std::setw(10) << std::setprecision(4) << s.mean_ssim << '\n';
    }
    if (!r.checks.empty()) os << "\nordering checks (mean PSNR over seeds)\n";
    for (const auto& c : r.checks) {
        os << (c.passed ? "PASS " : "FAIL ") << c.check.better << " > " << c.check.worse;
        if (c.check.margin_db > 0.0) os << " + " << std::setprecision(2) << c.check.margin_db << " dB";
        os << ": " << std::setprecision(3) << c.better_psnr << " vs " << c.worse_psnr << " dB";
        if (!c.seed_violations.empty()) {
            os << "; violated on seed";
            for (auto s : c.seed_violations) os << ' ' << s;
        }
        os << '\n';
    }
    if (!r.training.empty()) os << "\ntraining runs\n";
    for (const auto& t : r.training) {
        os << "seed " << t.seed << ' ' << t.method;
        if (t.method.starts_with("internal")) os << " slice " << t.slice;
        os << ": " << t.steps << " steps, final loss " << std::setprecision(5) << t.final_loss << ", stop "
           << to_string(t.stop_reason) << '\n';
    }
    return os.str();
}

} // namespace grdsr
