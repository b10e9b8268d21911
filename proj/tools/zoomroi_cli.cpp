// zoomroi: generate -> score -> train -> search -> evaluate.
//
// Every command resolves its parameters into a run configuration (defaults,
// then --config JSON, then explicit flags). JSON artifacts embed it under
// "run_config"; directories holding CSV artifacts also get run_config.json.
// Output directories and thread counts are not part of the configuration, so
// reruns into another directory produce identical bytes.

#include <zoomroi/zoomroi.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace zoomroi;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Parameter registry
// ---------------------------------------------------------------------------

class Params {
public:
    /// Registers `--flag` for configuration key `key`. `group` limits the key to
    /// runs where that group is active (empty = always).
    template <typename T>
    CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, T def,
             const std::string& help, const std::string& group = "") {
        auto value = std::make_shared<T>(def);
        CLI::Option* opt;
        if constexpr (std::is_same_v<T, bool>)
            opt = app->add_flag(flag, *value, help);
        else
            opt = app->add_option(flag, *value, help)->capture_default_str();
        entries_.push_back({key, group, opt, json(def), [value] { return json(*value); }});
        return opt;
    }

    json resolve(const std::string& config_path, const std::set<std::string>& groups) const {
        json file = json::object();
        if (!config_path.empty()) {
            file = read_json(config_path);
            if (file.contains("run_config")) file = file.at("run_config");
            if (!file.is_object()) throw UsageError("--config must hold a JSON object");
        }
        json cfg = json::object();
        for (const Entry& e : entries_) {
            if (!e.group.empty() && !groups.contains(e.group)) continue;
            cfg[e.key] = e.opt->count() > 0 ? e.current() : file.value(e.key, e.def);
        }
        for (const auto& [key, v] : file.items()) {
            const bool known = std::any_of(entries_.begin(), entries_.end(),
                                           [&](const Entry& e) { return e.key == key; });
            if (!known && key != "command") throw UsageError("unknown configuration key '" + key + "'");
        }
        return cfg;
    }

    /// Value of a key before group filtering (used to pick the groups).
    json peek(const std::string& config_path, const std::string& key) const {
        for (const Entry& e : entries_) {
            if (e.key != key) continue;
            if (e.opt->count() > 0) return e.current();
            if (!config_path.empty()) {
                json file = read_json(config_path);
                if (file.contains("run_config")) file = file.at("run_config");
                if (file.contains(key)) return file.at(key);
            }
            return e.def;
        }
        throw std::logic_error("unregistered key " + key);
    }

private:
    struct Entry {
        std::string key;
        std::string group;
        CLI::Option* opt;
        json def;
        std::function<json()> current;
    };
    std::vector<Entry> entries_;
};

struct Common {
    std::string out;
    std::string config;
    std::size_t threads = default_threads();
};

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
    auto* o = app->add_option("--out", c.out, "Output directory");
    if (needs_out) o->required();
    app->add_option("--config", c.config, "JSON run configuration (flags override it)");
    app->add_option("--threads", c.threads, "Worker threads; never changes outputs")
        ->check(CLI::PositiveNumber);
}

json with_command(const std::string& command, const json& cfg) {
    json j{{"command", command}};
    j.update(cfg);
    return j;
}

fs::path prepare_out(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << text;
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

template <typename T>
T get(const json& cfg, const char* key) {
    return cfg.at(key).get<T>();
}

// ---------------------------------------------------------------------------
// Slide sets
// ---------------------------------------------------------------------------

struct SlidePaths {
    std::string id;
    fs::path slide;
    fs::path mask;
};

/// `<dir>/<split>/<index>_slide.png` with matching masks, in index order.
std::vector<SlidePaths> suite_split(const fs::path& suite, const std::string& split) {
    const fs::path dir = suite / split;
    if (!fs::is_directory(dir)) throw IoError("suite has no '" + split + "' directory: " + dir.string());
    std::vector<std::pair<std::size_t, SlidePaths>> found;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        const std::string suffix = "_slide.png";
        if (name.size() <= suffix.size() || !name.ends_with(suffix)) continue;
        const std::string stem = name.substr(0, name.size() - suffix.size());
        std::size_t index = 0;
        const auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), index);
        if (ec != std::errc{} || ptr != stem.data() + stem.size()) continue;
        found.push_back({index, {split + "/" + stem, entry.path(), dir / (stem + "_mask.png")}});
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<SlidePaths> out;
    for (auto& [i, p] : found) out.push_back(std::move(p));
    if (out.empty()) throw IoError("no slides found in " + dir.string());
    return out;
}

std::vector<SlidePaths> explicit_slides(const std::vector<std::string>& slides,
                                        const std::vector<std::string>& masks) {
    if (slides.size() != masks.size()) throw UsageError("each --slide needs a matching --mask");
    std::vector<SlidePaths> out;
    for (std::size_t i = 0; i < slides.size(); ++i)
        out.push_back({fs::path(slides[i]).stem().string(), slides[i], masks[i]});
    return out;
}

std::vector<Slide> load_slides(const std::vector<SlidePaths>& paths, std::uint32_t tile_size,
                               std::uint8_t threshold, std::size_t threads) {
    std::vector<Slide> out;
    for (const SlidePaths& p : paths) {
        Slide s = load_slide_with_mask(p.slide, p.mask, tile_size, threshold, threads);
        s.id = p.id;
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateCmd {
    Common common;
    Params params;

    void setup(CLI::App* app) {
        add_common(app, common);
        params.add<std::uint64_t>(app, "--seed", "seed", 0, "Suite seed");
        params.add<std::string>(app, "--preset", "preset", "benchmark", "Catalog to generate")
            ->check(CLI::IsMember({"benchmark"}));
        params.add<std::string>(app, "--spec", "spec", "", "Single synthetic slide spec (JSON) instead of a preset");
    }

    int run() {
        const json cfg = with_command("generate", params.resolve(common.config, {}));
        const fs::path out = prepare_out(common.out);
        const std::string spec_path = get<std::string>(cfg, "spec");
        if (!spec_path.empty()) {
            const SynthResult r = generate(synth_spec_from_json(read_json(spec_path)));
            write_png(out / "slide.png", r.slide);
            write_png(out / "mask.png", r.mask);
            write_json(out / "manifest.json", json{{"run_config", cfg}, {"manifest", to_json(r.manifest)}});
            std::cout << "wrote slide.png, mask.png, manifest.json (root reward "
                      << format_double(r.manifest.root_reward()) << ")\n";
            return 0;
        }
        const auto suite = benchmark_suite(get<std::uint64_t>(cfg, "seed"));
        std::vector<SynthManifest> manifests(suite.size());
        parallel_for(suite.size(), common.threads, [&](std::size_t i) {
            const SuiteEntry& e = suite[i];
            const SynthResult r = generate(e.spec);
            const fs::path dir = out / e.split;
            fs::create_directories(dir);
            write_png(dir / (std::to_string(e.index) + "_slide.png"), r.slide);
            write_png(dir / (std::to_string(e.index) + "_mask.png"), r.mask);
            manifests[i] = r.manifest;
        });
        json slides = json::array();
        double total = 0.0;
        for (std::size_t i = 0; i < suite.size(); ++i) {
            const SuiteEntry& e = suite[i];
            const std::string stem = e.split + "/" + std::to_string(e.index);
            slides.push_back({{"split", e.split},
                              {"index", e.index},
                              {"slide", stem + "_slide.png"},
                              {"mask", stem + "_mask.png"},
                              {"target_fraction", e.target_fraction},
                              {"manifest", to_json(manifests[i])}});
            total += manifests[i].root_reward();
        }
        write_json(out / "manifest.json",
                   json{{"run_config", cfg},
                        {"mean_root_reward", total / static_cast<double>(suite.size())},
                        {"slides", slides}});
        std::cout << "wrote " << suite.size() << " slide/mask pairs to " << out.string() << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreCmd {
    Common common;
    Params params;

    void setup(CLI::App* app) {
        add_common(app, common);
        params.add<std::string>(app, "--slide", "slide", "", "Slide PNG");
        params.add<std::string>(app, "--mask", "mask", "", "Mask PNG (black = cancer)");
        params.add<std::uint32_t>(app, "--tile-size", "tile_size", kDefaultTileSize, "Tile edge in pixels");
        params.add<int>(app, "--threshold", "mask_threshold", kDefaultMaskThreshold,
                        "Mask pixels with luma below this are cancer");
    }

    int run() {
        const json cfg = with_command("score", params.resolve(common.config, {}));
        if (get<std::string>(cfg, "slide").empty() || get<std::string>(cfg, "mask").empty())
            throw UsageError("score needs --slide and --mask");
        const Slide s = load_slide_with_mask(get<std::string>(cfg, "slide"), get<std::string>(cfg, "mask"),
                                             get<std::uint32_t>(cfg, "tile_size"),
                                             static_cast<std::uint8_t>(get<int>(cfg, "mask_threshold")),
                                             common.threads);
        const fs::path out = prepare_out(common.out);
        write_reward_csv(s.rewards, out / "rewards.csv");
        write_json(out / "run_config.json", cfg);
        std::cout << "depth " << s.rewards.max_depth() << ", root reward "
                  << format_double(s.rewards.reward({0, 0, 0})) << "\n";
        return 0;
    }
};

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainCmd {
    Common common;
    Params params;

    void setup(CLI::App* app) {
        add_common(app, common);
        params.add<std::string>(app, "--mode", "mode", "dqn", "dqn, linear or mlp")
            ->check(CLI::IsMember({"dqn", "linear", "mlp"}));
        params.add<std::uint64_t>(app, "--seed", "seed", 0, "Training seed");
        params.add<std::string>(app, "--suite", "suite", "", "Suite directory from 'generate'");
        params.add<std::string>(app, "--split", "split", "train", "Suite split to train on");
        params.add<std::string>(app, "--val-split", "val_split", "val", "Suite split for validation", "regressor");
        params.add<std::vector<std::string>>(app, "--slide", "slides", {}, "Training slide PNG (repeatable)");
        params.add<std::vector<std::string>>(app, "--mask", "masks", {}, "Mask for each --slide");
        params.add<std::vector<std::string>>(app, "--val-slide", "val_slides", {}, "Validation slide PNG", "regressor");
        params.add<std::vector<std::string>>(app, "--val-mask", "val_masks", {}, "Mask for each --val-slide", "regressor");
        params.add<std::uint32_t>(app, "--tile-size", "tile_size", kDefaultTileSize, "Tile edge in pixels");
        params.add<int>(app, "--threshold", "mask_threshold", kDefaultMaskThreshold, "Mask luma threshold");

        const TrainConfig q;
        params.add<std::string>(app, "--approximator", "approximator", "tabular", "tabular, linear or mlp", "dqn")
            ->check(CLI::IsMember({"tabular", "linear", "mlp"}));
        params.add<double>(app, "--lr", "learning_rate", q.learning_rate, "Q-learning step size", "dqn");
        params.add<std::size_t>(app, "--batch-size", "batch_size", q.batch_size, "Replay batch size", "dqn");
        params.add<std::uint64_t>(app, "--iterations", "iterations", q.iterations, "Environment steps", "dqn");
        params.add<double>(app, "--gamma", "gamma", q.gamma, "Discount factor", "dqn");
        params.add<std::size_t>(app, "--buffer-capacity", "buffer_capacity", q.buffer_capacity, "Replay capacity", "dqn");
        params.add<double>(app, "--eps-start", "eps_start", q.eps_start, "Initial exploration rate", "dqn");
        params.add<double>(app, "--eps-end", "eps_end", q.eps_end, "Final exploration rate", "dqn");
        params.add<std::size_t>(app, "--hidden", "hidden", MlpNet<1>::kDefaultHidden, "MLP hidden units", "hidden");

        const LinearTrainConfig lin;
        const MlpTrainConfig mlp;
        params.add<std::size_t>(app, "--samples-per-level", "samples_per_level", 5000,
                                "Tiles sampled per slide and level", "regressor");
        params.add<double>(app, "--linear-lr", "linear_learning_rate", lin.learning_rate, "SGD step size", "linear");
        params.add<double>(app, "--l2", "l2", lin.l2, "L2 penalty on weights", "linear");
        params.add<double>(app, "--tolerance", "tolerance", lin.tolerance, "Stop when an epoch improves less", "linear");
        params.add<std::size_t>(app, "--max-epochs", "max_epochs", lin.max_epochs, "Epoch cap", "linear");
        params.add<std::size_t>(app, "--linear-batch-size", "linear_batch_size", lin.batch_size, "SGD batch size", "linear");
        params.add<double>(app, "--adam-lr", "adam_learning_rate", mlp.adam.learning_rate, "Adam step size", "mlp");
        params.add<double>(app, "--adam-beta1", "adam_beta1", mlp.adam.beta1, "Adam first-moment decay", "mlp");
        params.add<double>(app, "--adam-beta2", "adam_beta2", mlp.adam.beta2, "Adam second-moment decay", "mlp");
        params.add<double>(app, "--adam-epsilon", "adam_epsilon", mlp.adam.epsilon, "Adam denominator guard", "mlp");
        params.add<std::size_t>(app, "--mlp-batch-size", "mlp_batch_size", mlp.batch_size, "Adam batch size", "mlp");
        params.add<std::size_t>(app, "--epochs", "epochs", mlp.epochs, "Training epochs", "mlp");
    }

    int run() {
        const std::string mode = params.peek(common.config, "mode").get<std::string>();
        std::set<std::string> groups{mode};
        if (mode == "dqn") {
            const std::string approx = params.peek(common.config, "approximator").get<std::string>();
            if (approx == "mlp") groups.insert("hidden");
        } else {
            groups.insert("regressor");
            if (mode == "mlp") groups.insert("hidden");
        }
        const json cfg = with_command("train", params.resolve(common.config, groups));
        const std::uint32_t ts = get<std::uint32_t>(cfg, "tile_size");
        const auto thr = static_cast<std::uint8_t>(get<int>(cfg, "mask_threshold"));

        std::vector<SlidePaths> train_paths, val_paths;
        const std::string suite = get<std::string>(cfg, "suite");
        if (!suite.empty()) {
            train_paths = suite_split(suite, get<std::string>(cfg, "split"));
            if (mode != "dqn") val_paths = suite_split(suite, get<std::string>(cfg, "val_split"));
        } else {
            train_paths = explicit_slides(get<std::vector<std::string>>(cfg, "slides"),
                                          get<std::vector<std::string>>(cfg, "masks"));
            if (mode != "dqn")
                val_paths = explicit_slides(get<std::vector<std::string>>(cfg, "val_slides"),
                                            get<std::vector<std::string>>(cfg, "val_masks"));
        }
        if (train_paths.empty()) throw UsageError("train needs --suite or at least one --slide/--mask pair");

        const std::vector<Slide> train = load_slides(train_paths, ts, thr, common.threads);
        const std::vector<Slide> val = load_slides(val_paths, ts, thr, common.threads);
        const fs::path out = prepare_out(common.out);
        FeatureConfig features;
        features.tile_size = ts;
        if (mode == "dqn") return run_dqn(cfg, train, features, out);
        return run_regressor(cfg, mode, train, val, features, out);
    }

    int run_dqn(const json& cfg, const std::vector<Slide>& slides, const FeatureConfig& fc,
                const fs::path& out) {
        TrainConfig tc;
        tc.learning_rate = get<double>(cfg, "learning_rate");
        tc.batch_size = get<std::size_t>(cfg, "batch_size");
        tc.iterations = get<std::uint64_t>(cfg, "iterations");
        tc.gamma = get<double>(cfg, "gamma");
        tc.buffer_capacity = get<std::size_t>(cfg, "buffer_capacity");
        tc.seed = get<std::uint64_t>(cfg, "seed");
        tc.eps_start = get<double>(cfg, "eps_start");
        tc.eps_end = get<double>(cfg, "eps_end");

        const std::string approx = get<std::string>(cfg, "approximator");
        std::vector<FeatureTable> tables;
        if (approx != "tabular")
            for (const Slide& s : slides) tables.emplace_back(s.pyramid, s.rewards, fc.normalization, common.threads);
        const StateViews views(tables);
        std::vector<ZoomEnv> envs;
        for (std::size_t i = 0; i < slides.size(); ++i) envs.emplace_back(slides[i].rewards, i);

        const auto fit = [&](auto q) {
            const auto curve = train(q, std::span<ZoomEnv>(envs), views, tc);
            std::ostringstream csv;
            write_curve_csv(curve, csv);
            write_text(out / "curve.csv", csv.str());

            std::ostringstream greedy;
            greedy << "slide,id,greedy_return,optimal_return\n";
            for (std::size_t i = 0; i < envs.size(); ++i) {
                const double ret = episode_return(greedy_rollout(q, envs[i], views));
                const double best = backward_induction(slides[i].rewards, tc.gamma).state_value({0, 0, 0});
                greedy << i << ',' << slides[i].id << ',' << format_double(ret) << ','
                       << format_double(best) << '\n';
                std::cout << slides[i].id << ": greedy return " << format_double(ret) << " of "
                          << format_double(best) << "\n";
            }
            write_text(out / "greedy.csv", greedy.str());
            save_checkpoint(out / "checkpoint.json", Checkpoint{std::move(q), fc, cfg});
        };
        if (approx == "tabular") {
            fit(TabularQ{});
        } else {
            Rng init(tc.seed ^ 0x5bd1e995ULL);
            if (approx == "linear")
                fit(LinearQ{LinearNet<4>(kFeatureLength)});
            else
                fit(MlpQ{MlpNet<4>(kFeatureLength, get<std::size_t>(cfg, "hidden"), init)});
        }
        write_json(out / "run_config.json", cfg);
        return 0;
    }

    int run_regressor(const json& cfg, const std::string& mode, const std::vector<Slide>& train,
                      const std::vector<Slide>& val, const FeatureConfig& fc, const fs::path& out) {
        Rng rng(get<std::uint64_t>(cfg, "seed"));
        const std::size_t per_level = get<std::size_t>(cfg, "samples_per_level");
        std::vector<FeatureTable> train_tables, val_tables;
        for (const Slide& s : train) train_tables.emplace_back(s.pyramid, s.rewards, fc.normalization, common.threads);
        for (const Slide& s : val) val_tables.emplace_back(s.pyramid, s.rewards, fc.normalization, common.threads);
        Dataset train_data, val_data;
        for (std::size_t i = 0; i < train.size(); ++i)
            train_data.append(sample_tiles(train[i].rewards, train_tables[i], per_level, rng.fork(), i));
        for (std::size_t i = 0; i < val.size(); ++i)
            val_data.append(sample_tiles(val[i].rewards, val_tables[i], per_level, rng.fork(), i));
        const std::uint64_t fit_seed = rng.fork();

        json metrics{{"run_config", cfg}};
        const auto report = [&](const auto& model, const std::vector<LossPoint>& curve) {
            std::ostringstream loss, hist;
            write_loss_csv(curve, loss);
            write_text(out / "loss.csv", loss.str());
            const Dataset& eval = val_data.empty() ? train_data : val_data;
            write_error_histogram_csv(model, eval.examples, 10, hist);
            write_text(out / "error_histogram.csv", hist.str());
            metrics["train_examples"] = train_data.size();
            metrics["validation_examples"] = val_data.size();
            metrics["train_mse"] = mse(model, train_data.examples);
            if (!val_data.empty()) {
                metrics["validation_mse"] = mse(model, val_data.examples);
                metrics["validation_agreement"] = threshold_agreement(model, val_data.examples);
            }
            std::cout << "train mse " << format_double(metrics["train_mse"].get<double>());
            if (!val_data.empty())
                std::cout << ", validation mse " << format_double(metrics["validation_mse"].get<double>());
            std::cout << "\n";
        };

        if (mode == "linear") {
            LinearTrainConfig lc;
            lc.learning_rate = get<double>(cfg, "linear_learning_rate");
            lc.l2 = get<double>(cfg, "l2");
            lc.tolerance = get<double>(cfg, "tolerance");
            lc.max_epochs = get<std::size_t>(cfg, "max_epochs");
            lc.batch_size = get<std::size_t>(cfg, "linear_batch_size");
            const LinearFit fit = train_linear(train_data, lc, fit_seed, &val_data);
            report(fit.model, fit.curve);
            metrics["epochs"] = fit.epochs;
            save_checkpoint(out / "checkpoint.json", Checkpoint{fit.model, fc, cfg});
        } else {
            MlpTrainConfig mc;
            mc.hidden = get<std::size_t>(cfg, "hidden");
            mc.adam = {get<double>(cfg, "adam_learning_rate"), get<double>(cfg, "adam_beta1"),
                       get<double>(cfg, "adam_beta2"), get<double>(cfg, "adam_epsilon")};
            mc.batch_size = get<std::size_t>(cfg, "mlp_batch_size");
            mc.epochs = get<std::size_t>(cfg, "epochs");
            const MlpFit fit = train_mlp(train_data, val_data, mc, fit_seed);
            report(fit.model, fit.curve);
            metrics["epochs"] = mc.epochs;
            save_checkpoint(out / "checkpoint.json", Checkpoint{fit.model, fc, cfg});
        }
        write_json(out / "metrics.json", metrics);
        write_json(out / "run_config.json", cfg);
        return 0;
    }
};

// ---------------------------------------------------------------------------
// search
// ---------------------------------------------------------------------------

struct SearchCmd {
    Common common;
    Params params;

    void setup(CLI::App* app) {
        add_common(app, common);
        params.add<std::string>(app, "--mode", "mode", "beam", "greedy, beam, scan or random")
            ->check(CLI::IsMember({"greedy", "beam", "scan", "random"}));
        params.add<std::string>(app, "--slide", "slide", "", "Slide PNG");
        params.add<std::string>(app, "--mask", "mask", "", "Ground-truth mask PNG");
        params.add<std::string>(app, "--checkpoint", "checkpoint", "", "Trained model");
        params.add<bool>(app, "--oracle", "oracle", false, "Score with ground truth instead of a model");
        params.add<std::string>(app, "--oracle-kind", "oracle_kind", "reward",
                                "reward (tile reward) or qstar (exact optimal Q)")
            ->check(CLI::IsMember({"reward", "qstar"}));
        params.add<std::size_t>(app, "--k", "k", 16, "Leaves to select");
        params.add<std::size_t>(app, "--beam-width", "beam_width", 0, "Beam width (0 means k)");
        params.add<double>(app, "--fraction", "fraction", 0.1, "Top fraction of leaves for scan mode");
        params.add<std::size_t>(app, "--q-slide", "q_slide", 0, "Slide index for tabular Q checkpoints");
        params.add<std::uint64_t>(app, "--seed", "seed", 0, "Seed for random mode");
        params.add<std::uint32_t>(app, "--tile-size", "tile_size", kDefaultTileSize, "Tile edge in pixels");
        params.add<int>(app, "--threshold", "mask_threshold", kDefaultMaskThreshold, "Mask luma threshold");
    }

    int run() {
        json cfg = with_command("search", params.resolve(common.config, {}));
        const std::string mode = get<std::string>(cfg, "mode");
        const std::size_t k = get<std::size_t>(cfg, "k");
        std::size_t width = get<std::size_t>(cfg, "beam_width");
        if (width == 0) width = k;
        cfg["beam_width"] = width;
        const bool oracle = get<bool>(cfg, "oracle");
        const std::string ckpt_path = get<std::string>(cfg, "checkpoint");
        if (get<std::string>(cfg, "slide").empty() || get<std::string>(cfg, "mask").empty())
            throw UsageError("search needs --slide and --mask");
        if (k == 0) throw UsageError("--k must be at least 1");
        if (mode == "beam" && width < k)
            throw UsageError("--beam-width " + std::to_string(width) + " is smaller than --k " + std::to_string(k));
        if (mode != "random" && oracle == !ckpt_path.empty())
            throw UsageError("mode '" + mode + "' needs exactly one of --oracle or --checkpoint");

        std::optional<Checkpoint> ckpt;
        std::uint32_t ts = get<std::uint32_t>(cfg, "tile_size");
        if (mode != "random" && !oracle) {
            ckpt = load_checkpoint(ckpt_path);
            if (ckpt->features.tile_size != ts)
                throw InvalidArgument("checkpoint was trained with tile size " +
                                      std::to_string(ckpt->features.tile_size));
        }
        const Slide slide = load_slide_with_mask(get<std::string>(cfg, "slide"), get<std::string>(cfg, "mask"), ts,
                                                 static_cast<std::uint8_t>(get<int>(cfg, "mask_threshold")),
                                                 common.threads);
        const SelectionReport report = select(cfg, mode, k, width, slide, ckpt);

        const fs::path out = prepare_out(common.out);
        write_json(out / "report.json", json{{"run_config", cfg}, {"slide", slide.id}, {"report", to_json(report)}});
        const MaskRaster mask = load_mask(get<std::string>(cfg, "mask"),
                                          static_cast<std::uint8_t>(get<int>(cfg, "mask_threshold")),
                                          slide.pyramid.width(), slide.pyramid.height());
        write_png(out / "overlay.png", render_overlay(slide.pyramid, &mask, report.tiles));
        std::cout << report.method << ": " << report.tiles.size() << " leaves, mean reward "
                  << format_double(report.mean_reward) << ", regret " << format_double(report.regret) << "\n";
        return 0;
    }

    SelectionReport select(const json& cfg, const std::string& mode, std::size_t k, std::size_t width,
                           const Slide& slide, const std::optional<Checkpoint>& ckpt) {
        if (mode == "random") {
            Rng rng(get<std::uint64_t>(cfg, "seed"));
            return random_select(slide.rewards, k, rng);
        }
        const std::size_t threads = common.threads;
        const auto run_binding = [&](const ScorerBinding& b) {
            return mode == "greedy" ? greedy_select(slide, b) : beam_search(slide, b, k, width, threads);
        };
        if (!ckpt) {
            if (mode == "scan") {
                std::vector<SelectedTile> chosen;
                const auto leaves = slide.rewards.leaves();
                for (const TileAddr& a : brute_force_topk(slide.rewards, top_fraction_count(get<double>(cfg, "fraction"), leaves.size())))
                    chosen.push_back({a, slide.rewards.reward(a), 0.0});
                return evaluate_selection("scan", std::move(chosen), slide.rewards);
            }
            if (get<std::string>(cfg, "oracle_kind") == "qstar") {
                const QTable star = backward_induction(slide.rewards, 1.0);
                return run_binding(qstar_binding(star));
            }
            return run_binding(oracle_reward_binding(slide.rewards));
        }
        const FeatureTable table(slide.pyramid, slide.rewards, ckpt->features.normalization, threads);
        const std::vector<FeatureTable> tables{table};
        return std::visit(
            [&](const auto& model) -> SelectionReport {
                using M = std::decay_t<decltype(model)>;
                if constexpr (std::is_same_v<M, LinearModel> || std::is_same_v<M, MlpModel>) {
                    if (mode == "scan")
                        return full_scan_select(slide.rewards, table, model, get<double>(cfg, "fraction"), threads);
                    return run_binding(value_model_binding(model, table));
                } else {
                    if (mode == "scan") throw UsageError("scan mode needs a regressor checkpoint");
                    if constexpr (std::is_same_v<M, TabularQ>) {
                        return run_binding(q_function_binding(model, StateViews{}, get<std::size_t>(cfg, "q_slide")));
                    } else {
                        return run_binding(q_function_binding(model, StateViews(tables), 0));
                    }
                }
            },
            ckpt->model);
    }
};

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateCmd {
    Common common;
    Params params;

    void setup(CLI::App* app) {
        add_common(app, common);
        params.add<std::vector<std::string>>(app, "--reports", "reports", {}, "report.json files from 'search'");
    }

    int run() {
        const json cfg = with_command("evaluate", params.resolve(common.config, {}));
        const auto paths = get<std::vector<std::string>>(cfg, "reports");
        if (paths.empty()) throw UsageError("evaluate needs at least one --reports file");
        struct Row {
            std::string slide;
            SelectionReport report;
        };
        std::vector<Row> rows;
        for (const std::string& p : paths) {
            const json j = read_json(p);
            if (!j.contains("report")) throw InvalidArgument("'" + p + "' is not a search report");
            rows.push_back({j.value("slide", fs::path(p).parent_path().filename().string()),
                            selection_report_from_json(j.at("report"))});
        }
        std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (a.slide != b.slide) return a.slide < b.slide;
            return a.report.mean_reward > b.report.mean_reward;
        });
        std::ostringstream csv, text;
        csv << "slide,method,k,mean_reward,optimal_mean,regret,zero,partial,full\n";
        text << std::left << std::setw(16) << "slide" << std::setw(10) << "method" << std::right
             << std::setw(6) << "k" << std::setw(12) << "mean" << std::setw(12) << "optimal"
             << std::setw(12) << "regret" << std::setw(8) << "{0}" << std::setw(8) << "(0,1)"
             << std::setw(8) << "{1}" << "\n";
        for (const Row& r : rows) {
            const SelectionReport& s = r.report;
            csv << r.slide << ',' << s.method << ',' << s.tiles.size() << ',' << format_double(s.mean_reward)
                << ',' << format_double(s.optimal_mean) << ',' << format_double(s.regret) << ','
                << s.histogram.zero << ',' << s.histogram.partial << ',' << s.histogram.full << '\n';
            text << std::left << std::setw(16) << r.slide << std::setw(10) << s.method << std::right
                 << std::setw(6) << s.tiles.size() << std::fixed << std::setprecision(4) << std::setw(12)
                 << s.mean_reward << std::setw(12) << s.optimal_mean << std::setw(12) << s.regret
                 << std::setw(8) << s.histogram.zero << std::setw(8) << s.histogram.partial
                 << std::setw(8) << s.histogram.full << "\n";
        }
        const fs::path out = prepare_out(common.out);
        write_text(out / "comparison.csv", csv.str());
        write_text(out / "comparison.txt", text.str());
        write_json(out / "run_config.json", cfg);
        std::cout << text.str();
        return 0;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Region-of-interest search over tile pyramids"};
    app.require_subcommand(1);
    GenerateCmd generate_cmd;
    ScoreCmd score_cmd;
    TrainCmd train_cmd;
    SearchCmd search_cmd;
    EvaluateCmd evaluate_cmd;
    generate_cmd.setup(app.add_subcommand("generate", "Write a synthetic slide suite"));
    score_cmd.setup(app.add_subcommand("score", "Compute the reward CSV for a slide and mask"));
    train_cmd.setup(app.add_subcommand("train", "Train a Q-function or a tile regressor"));
    search_cmd.setup(app.add_subcommand("search", "Select leaf tiles on one slide"));
    evaluate_cmd.setup(app.add_subcommand("evaluate", "Compare search reports"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (app.got_subcommand("generate")) return generate_cmd.run();
        if (app.got_subcommand("score")) return score_cmd.run();
        if (app.got_subcommand("train")) return train_cmd.run();
        if (app.got_subcommand("search")) return search_cmd.run();
        if (app.got_subcommand("evaluate")) return evaluate_cmd.run();
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
