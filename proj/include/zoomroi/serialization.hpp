#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "error.hpp"
#include "pyramid.hpp"
#include "qlearn.hpp"
#include "regressor.hpp"
#include "selection.hpp"
#include "synth.hpp"

namespace zoomroi {

using json = nlohmann::ordered_json;

inline constexpr std::string_view kCheckpointFormat = "zoomroi-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Pretty-printed with a trailing newline; key order is insertion order so the
/// bytes depend only on the content.
inline void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("invalid JSON in '" + path.string() + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Feature configuration
// ---------------------------------------------------------------------------

inline json to_json(const FeatureConfig& c) {
    return json{{"tile_size", c.tile_size},
                {"normalization", {{"mean", c.normalization.mean}, {"std", c.normalization.std}}},
                {"feature_layout_version", c.layout_version}};
}

/// Missing keys keep their defaults.
inline FeatureConfig feature_config_from_json(const json& j) {
    FeatureConfig c;
    try {
        if (j.contains("tile_size")) c.tile_size = j.at("tile_size").get<std::uint32_t>();
        if (j.contains("normalization")) {
            const json& n = j.at("normalization");
            if (n.contains("mean")) c.normalization.mean = n.at("mean").get<std::array<double, 3>>();
            if (n.contains("std")) c.normalization.std = n.at("std").get<std::array<double, 3>>();
        }
        if (j.contains("feature_layout_version"))
            c.layout_version = j.at("feature_layout_version").get<std::uint32_t>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("bad feature configuration: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

inline json to_json(const SynthSpec& s) {
    json blobs = json::array();
    for (const Blob& b : s.blobs) {
        blobs.push_back({{"cx", b.cx}, {"cy", b.cy}, {"rx", b.rx}, {"ry", b.ry},
                         {"dir_x", b.dir_x}, {"dir_y", b.dir_y}});
    }
    return json{{"width", s.width},   {"height", s.height}, {"blobs", blobs},
                {"background", s.background}, {"tint", s.tint},     {"noise", s.noise},
                {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const json& j) {
    SynthSpec s;
    try {
        s.width = j.at("width").get<std::uint64_t>();
        s.height = j.at("height").get<std::uint64_t>();
        for (const json& b : j.value("blobs", json::array())) {
            s.blobs.push_back({b.at("cx").get<std::int64_t>(), b.at("cy").get<std::int64_t>(),
                               b.at("rx").get<std::int64_t>(), b.at("ry").get<std::int64_t>(),
                               b.value("dir_x", std::int64_t{1}), b.value("dir_y", std::int64_t{0})});
        }
        if (j.contains("background")) s.background = j.at("background").get<std::array<std::uint8_t, 3>>();
        if (j.contains("tint")) s.tint = j.at("tint").get<std::array<int, 3>>();
        if (j.contains("noise")) s.noise = j.at("noise").get<std::uint8_t>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("bad synth spec: ") + e.what());
    }
    s.validate();
    return s;
}

inline json to_json(const SynthManifest& m) {
    return json{{"spec", to_json(m.spec)},
                {"blob_pixels", m.blob_pixels},
                {"cancer_pixels", m.cancer_pixels},
                {"total_pixels", m.total_pixels},
                {"root_reward", m.root_reward()}};
}

// ---------------------------------------------------------------------------
// Selection reports
// ---------------------------------------------------------------------------

inline json to_json(const SelectionReport& r) {
    json tiles = json::array();
    for (const SelectedTile& t : r.tiles) {
        tiles.push_back({{"level", t.addr.level}, {"col", t.addr.col}, {"row", t.addr.row},
                         {"score", t.score}, {"reward", t.reward}});
    }
    return json{{"method", r.method},
                {"k", r.tiles.size()},
                {"mean_reward", r.mean_reward},
                {"optimal_mean", r.optimal_mean},
                {"regret", r.regret},
                {"histogram", {{"zero", r.histogram.zero}, {"partial", r.histogram.partial}, {"full", r.histogram.full}}},
                {"tiles", tiles}};
}

inline SelectionReport selection_report_from_json(const json& j) {
    SelectionReport r;
    try {
        r.method = j.at("method").get<std::string>();
        r.mean_reward = j.at("mean_reward").get<double>();
        r.optimal_mean = j.at("optimal_mean").get<double>();
        r.regret = j.at("regret").get<double>();
        const json& h = j.at("histogram");
        r.histogram = {h.at("zero").get<std::size_t>(), h.at("partial").get<std::size_t>(),
                       h.at("full").get<std::size_t>()};
        for (const json& t : j.at("tiles")) {
            r.tiles.push_back({{t.at("level").get<std::uint32_t>(), t.at("col").get<std::uint32_t>(),
                                t.at("row").get<std::uint32_t>()},
                               t.at("score").get<double>(), t.at("reward").get<double>()});
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("bad selection report: ") + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

using AnyModel = std::variant<TabularQ, LinearQ, MlpQ, LinearModel, MlpModel>;

struct Checkpoint {
    AnyModel model;
    FeatureConfig features;
    json config = json::object();  // run configuration echoed for provenance
};

inline std::string_view model_kind(const AnyModel& m) {
    constexpr std::array<std::string_view, 5> kinds{"tabular-q", "linear-q", "mlp-q",
                                                    "linear-regressor", "mlp-regressor"};
    return kinds[m.index()];
}

namespace detail {

inline std::vector<double> read_params(const json& j, std::size_t expected) {
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != expected)
        throw InvalidArgument("checkpoint holds " + std::to_string(p.size()) +
                              " parameters, expected " + std::to_string(expected));
    return p;
}

template <typename Net>
void load_params(Net& net, const json& j) {
    const auto p = read_params(j, net.params().size());
    std::copy(p.begin(), p.end(), net.params().begin());
}

template <typename Net>
std::vector<double> params_of(const Net& net) {
    return {net.params().begin(), net.params().end()};
}

}  // namespace detail

inline json to_json(const Checkpoint& c) {
    json j{{"format", kCheckpointFormat},
           {"version", kCheckpointVersion},
           {"kind", model_kind(c.model)},
           {"features", to_json(c.features)},
           {"config", c.config}};
    std::visit(
        [&](const auto& m) {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, TabularQ>) {
                json entries = json::array();
                for (const auto& [key, v] : m.entries()) {
                    entries.push_back({key.slide, key.addr.level, key.addr.col, key.addr.row,
                                       v[0], v[1], v[2], v[3]});
                }
                j["entries"] = entries;
            } else if constexpr (std::is_same_v<M, LinearQ>) {
                j["inputs"] = m.net().inputs();
                j["params"] = detail::params_of(m.net());
            } else if constexpr (std::is_same_v<M, MlpQ>) {
                j["inputs"] = m.net().inputs();
                j["hidden"] = m.net().hidden();
                j["params"] = detail::params_of(m.net());
            } else if constexpr (std::is_same_v<M, LinearModel>) {
                j["inputs"] = m.net.inputs();
                j["l2"] = m.l2;
                j["params"] = detail::params_of(m.net);
            } else {
                j["inputs"] = m.net.inputs();
                j["hidden"] = m.net.hidden();
                j["params"] = detail::params_of(m.net);
            }
        },
        c.model);
    return j;
}

inline Checkpoint checkpoint_from_json(const json& j) {
    Checkpoint c;
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat)
            throw InvalidArgument("not a checkpoint file");
        if (j.at("version").get<int>() != kCheckpointVersion)
            throw InvalidArgument("unsupported checkpoint version");
        c.features = feature_config_from_json(j.at("features"));
        c.config = j.value("config", json::object());
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "tabular-q") {
            TabularQ q;
            for (const json& e : j.at("entries")) {
                ActionValues& v = q.at(e.at(0).get<std::size_t>(),
                                       {e.at(1).get<std::uint32_t>(), e.at(2).get<std::uint32_t>(),
                                        e.at(3).get<std::uint32_t>()});
                for (std::size_t a = 0; a < 4; ++a) v[a] = e.at(4 + a).get<double>();
            }
            c.model = std::move(q);
        } else if (kind == "linear-q") {
            LinearQ q{LinearNet<4>(j.at("inputs").get<std::size_t>())};
            detail::load_params(q.net(), j);
            c.model = std::move(q);
        } else if (kind == "mlp-q") {
            MlpQ q{MlpNet<4>(j.at("inputs").get<std::size_t>(), j.at("hidden").get<std::size_t>())};
            detail::load_params(q.net(), j);
            c.model = std::move(q);
        } else if (kind == "linear-regressor") {
            LinearModel m(j.at("inputs").get<std::size_t>(), j.value("l2", 0.0));
            detail::load_params(m.net, j);
            c.model = std::move(m);
        } else if (kind == "mlp-regressor") {
            MlpModel m{MlpNet<1>(j.at("inputs").get<std::size_t>(), j.at("hidden").get<std::size_t>())};
            detail::load_params(m.net, j);
            c.model = std::move(m);
        } else {
            throw InvalidArgument("unknown checkpoint kind '" + kind + "'");
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("malformed checkpoint: ") + e.what());
    }
    return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    write_json(path, to_json(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_json(read_json(path));
}

}  // namespace zoomroi
