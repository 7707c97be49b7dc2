#include "post/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "post/benchgen.hpp"
#include "post/datastore.hpp"
#include "post/evaluation.hpp"
#include "post/scoring.hpp"
#include "post/trainer.hpp"

namespace post {

using json = nlohmann::json;

namespace {

// ---- config plumbing ----

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
    if (!j.is_object()) throw UsageError("config: " + ctx + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) ok = ok || it.key() == k;
        if (!ok) throw UsageError("config: unknown key \"" + it.key() + "\" in " + ctx);
    }
}

json section(const json& cfg, const char* key) {
    if (!cfg.contains(key)) return json::object();
    if (!cfg.at(key).is_object())
        throw UsageError(std::string("config: section \"") + key + "\" must be an object");
    return cfg.at(key);
}

double get_num(const json& j, const char* key, double def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number())
        throw UsageError(std::string("config: \"") + key + "\" must be a number");
    return j.at(key).get<double>();
}

std::int64_t get_int(const json& j, const char* key, std::int64_t def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_number_integer())
        throw UsageError(std::string("config: \"") + key + "\" must be an integer");
    return j.at(key).get<std::int64_t>();
}

bool get_bool(const json& j, const char* key, bool def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_boolean())
        throw UsageError(std::string("config: \"") + key + "\" must be a boolean");
    return j.at(key).get<bool>();
}

std::string get_str(const json& j, const char* key, const std::string& def) {
    if (!j.contains(key)) return def;
    if (!j.at(key).is_string())
        throw UsageError(std::string("config: \"") + key + "\" must be a string");
    return j.at(key).get<std::string>();
}

std::string req_str(const json& j, const char* key) {
    if (!j.contains(key))
        throw UsageError(std::string("config: required key \"") + key + "\" is missing");
    return get_str(j, key, "");
}

std::uint64_t req_seed(const json& j) {
    if (!j.contains("seed")) throw UsageError("config: required key \"seed\" is missing");
    if (!j.at("seed").is_number_integer() || j.at("seed").get<std::int64_t>() < 0)
        throw UsageError("config: \"seed\" must be a non-negative integer");
    return j.at("seed").get<std::uint64_t>();
}

std::string out_dir(const json& cfg) {
    const std::string dir = req_str(cfg, "output_dir");
    std::filesystem::create_directories(dir);
    return dir;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << content;
    if (!f) throw DataError("write failed: " + path);
}

void echo_config(const std::string& dir, const json& effective) {
    write_text(dir + "/effective_config.json", effective.dump(2) + "\n");
}

bool name_is_smd_like(const std::string& name) {
    std::string low;
    for (char c : name) low.push_back(static_cast<char>(std::tolower(c)));
    return low.rfind("smd", 0) == 0;
}

double default_r(const json& cfg, const std::string& dataset_name) {
    if (cfg.contains("r")) return get_num(cfg, "r", 0.0);
    return name_is_smd_like(dataset_name) ? 0.5 : 1.0;
}

SpatialActivation parse_activation(const std::string& s) {
    if (s == "sigmoid") return SpatialActivation::Sigmoid;
    if (s == "softmax") return SpatialActivation::ChannelSoftmax;
    throw UsageError("config: spatial_activation must be \"sigmoid\" or \"softmax\"");
}

// ---- shared train/score plumbing ----

struct LoadedData {
    DatasetManifest manifest;
    NormStats stats;            // from the raw training series
    Matrix train_head;          // normalized training split
    Matrix train_tail;          // normalized validation split (may be empty)
    WindowSet train_windows;
    WindowSet val_windows;      // empty when the tail is shorter than a window
};

LoadedData load_training_data(const std::string& manifest_path) {
    LoadedData d;
    d.manifest = load_manifest(manifest_path);
    const Matrix raw = load_matrix(d.manifest.train);
    if (raw.cols() != d.manifest.channels)
        throw DataError("train series has " + std::to_string(raw.cols()) +
                        " channels but the manifest declares " +
                        std::to_string(d.manifest.channels));
    const SeriesSplit split = split_tail(raw, d.manifest.val_fraction);
    d.stats = compute_norm_stats(split.head);
    d.train_head = normalize(split.head, d.stats);
    d.train_windows = make_windows(d.train_head, d.manifest.window);
    if (split.tail.rows() >= d.manifest.window) {
        d.train_tail = normalize(split.tail, d.stats);
        d.val_windows = make_windows(d.train_tail, d.manifest.window);
    }
    return d;
}

TrainConfig train_config_from(const json& t, std::uint64_t seed) {
    check_keys(t,
               {"alpha", "beta", "gamma", "xi", "lambda", "margin", "lr", "graph_lr", "clip_norm",
                "inner_iters", "epochs", "batch", "patience", "prox_max_iters", "prox_tol",
                "knn_k", "c0", "disable_assdis_s", "freeze_g", "identity_g_init",
                "l1_penalty_mode"},
               "train");
    TrainConfig tc;
    tc.alpha = get_num(t, "alpha", tc.alpha);
    tc.beta = get_num(t, "beta", tc.beta);
    tc.gamma = get_num(t, "gamma", tc.gamma);
    tc.xi = get_num(t, "xi", tc.xi);
    tc.lambda = get_num(t, "lambda", tc.lambda);
    tc.margin = get_num(t, "margin", tc.margin);
    tc.lr = get_num(t, "lr", tc.lr);
    tc.graph_lr = get_num(t, "graph_lr", tc.graph_lr);
    tc.clip_norm = get_num(t, "clip_norm", tc.clip_norm);
    tc.inner_iters = static_cast<int>(get_int(t, "inner_iters", tc.inner_iters));
    tc.epochs = static_cast<int>(get_int(t, "epochs", tc.epochs));
    tc.batch = static_cast<int>(get_int(t, "batch", tc.batch));
    tc.patience = static_cast<int>(get_int(t, "patience", tc.patience));
    tc.prox_max_iters = static_cast<int>(get_int(t, "prox_max_iters", tc.prox_max_iters));
    tc.prox_tol = get_num(t, "prox_tol", tc.prox_tol);
    tc.knn_k = static_cast<int>(get_int(t, "knn_k", tc.knn_k));
    tc.c0 = get_num(t, "c0", tc.c0);
    tc.disable_assdis_s = get_bool(t, "disable_assdis_s", tc.disable_assdis_s);
    tc.freeze_g = get_bool(t, "freeze_g", tc.freeze_g);
    tc.identity_g_init = get_bool(t, "identity_g_init", tc.identity_g_init);
    tc.l1_penalty_mode = get_bool(t, "l1_penalty_mode", tc.l1_penalty_mode);
    tc.seed = seed;
    return tc;
}

json train_config_json(const TrainConfig& tc) {
    return json{{"alpha", tc.alpha},
                {"beta", tc.beta},
                {"gamma", tc.gamma},
                {"xi", tc.xi},
                {"lambda", tc.lambda},
                {"margin", tc.margin},
                {"lr", tc.lr},
                {"graph_lr", tc.graph_lr},
                {"clip_norm", tc.clip_norm},
                {"inner_iters", tc.inner_iters},
                {"epochs", tc.epochs},
                {"batch", tc.batch},
                {"patience", tc.patience},
                {"prox_max_iters", tc.prox_max_iters},
                {"prox_tol", tc.prox_tol},
                {"knn_k", tc.knn_k},
                {"c0", tc.c0},
                {"disable_assdis_s", tc.disable_assdis_s},
                {"freeze_g", tc.freeze_g},
                {"identity_g_init", tc.identity_g_init},
                {"l1_penalty_mode", tc.l1_penalty_mode}};
}

// Scores shared by the score and eval commands.
struct ScoreBundle {
    std::vector<double> test_timewise;   // concatenated over windows
    Matrix test_joint;                   // empty when the spatial path is off
    std::vector<double> cal_timewise;    // calibration collection
    std::vector<double> cal_joint;
    std::size_t covered_rows = 0;
    std::size_t dropped_rows = 0;
    bool joint_available = false;
    bool calibrated_on_validation = true;
    SpatialStats spatial_stats;
};

void append_col(std::vector<double>& acc, const Matrix& col) {
    for (std::size_t i = 0; i < col.rows(); ++i) acc.push_back(col(i, 0));
}

ScoreBundle score_dataset(ModelState& state, const LoadedData& d, const Matrix& test_norm,
                          SpatialActivation act) {
    ScoreBundle b;
    const WindowSet test_ws = make_windows(test_norm, d.manifest.window);
    b.covered_rows = test_ws.windows.size() * d.manifest.window;
    b.dropped_rows = test_ws.dropped_tail;
    b.joint_available = !state.cfg.disable_saga;

    const std::vector<Matrix>& cal =
        d.val_windows.windows.empty() ? d.train_windows.windows : d.val_windows.windows;
    b.calibrated_on_validation = !d.val_windows.windows.empty();

    if (b.joint_available) b.spatial_stats = fit_spatial_stats(state, d.train_windows.windows);

    for (const Matrix& w : test_ws.windows) append_col(b.test_timewise, score_timewise(state, w));
    for (const Matrix& w : cal) append_col(b.cal_timewise, score_timewise(state, w));

    if (b.joint_available) {
        const std::size_t d0 = state.cfg.d0;
        b.test_joint = Matrix(b.covered_rows, d0);
        std::size_t at = 0;
        for (const Matrix& w : test_ws.windows) {
            const Matrix s = score_spatiotemporal(state, w, b.spatial_stats, act);
            for (std::size_t i = 0; i < s.rows(); ++i)
                for (std::size_t j = 0; j < d0; ++j) b.test_joint(at + i, j) = s(i, j);
            at += s.rows();
        }
        for (const Matrix& w : cal) {
            const Matrix s = score_spatiotemporal(state, w, b.spatial_stats, act);
            b.cal_joint.insert(b.cal_joint.end(), s.data(), s.data() + s.size());
        }
    }
    return b;
}

json prf_json(const Prf& m) {
    return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                {"tp", m.tp},               {"fp", m.fp},         {"fn", m.fn}};
}

void write_pr_curve(const std::string& path, const PrCurve& curve) {
    std::ostringstream s;
    char buf[160];
    s << "ratio,threshold,precision,recall\n";
    for (const PrPoint& p : curve.points) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", p.ratio, p.threshold,
                      p.precision, p.recall);
        s << buf;
    }
    write_text(path, s.str());
}

}  // namespace

// ---- generate ----

void run_generate(const json& cfg, std::ostream& out) {
    check_keys(cfg,
               {"output_dir", "seed", "name", "format", "window", "val_fraction", "source",
                "targets", "inject"},
               "generate config");
    const std::string dir = out_dir(cfg);
    const std::uint64_t seed = req_seed(cfg);
    const std::string name = get_str(cfg, "name", "synthetic");
    const std::string format = get_str(cfg, "format", "csv");
    if (format != "csv" && format != "bin")
        throw UsageError("config: format must be \"csv\" or \"bin\"");
    const std::size_t window = static_cast<std::size_t>(get_int(cfg, "window", 100));
    const double val_fraction = get_num(cfg, "val_fraction", 0.2);

    const json src = section(cfg, "source");
    if (src.empty()) throw UsageError("config: required section \"source\" is missing");
    const std::string kind = req_str(src, "kind");

    Matrix train, test_src;
    std::vector<int> src_labels;
    if (kind == "sine") {
        check_keys(src, {"kind", "t_train", "t_test", "channels"}, "source");
        const std::size_t t_train = static_cast<std::size_t>(get_int(src, "t_train", 5000));
        const std::size_t t_test = static_cast<std::size_t>(get_int(src, "t_test", 2000));
        const std::size_t d0 = static_cast<std::size_t>(get_int(src, "channels", 5));
        if (!t_train || !t_test || !d0)
            throw UsageError("config: sine source sizes must be positive");
        const Matrix full = make_sine_mixture(t_train + t_test, d0, seed);
        train = Matrix(t_train, d0);
        test_src = Matrix(t_test, d0);
        for (std::size_t i = 0; i < t_train; ++i)
            for (std::size_t j = 0; j < d0; ++j) train(i, j) = full(i, j);
        for (std::size_t i = 0; i < t_test; ++i)
            for (std::size_t j = 0; j < d0; ++j) test_src(i, j) = full(t_train + i, j);
        src_labels.assign(t_test, 0);
    } else if (kind == "dataset") {
        check_keys(src, {"kind", "manifest"}, "source");
        const DatasetManifest m = load_manifest(req_str(src, "manifest"));
        if (m.labels.empty())
            throw DataError("generate: dataset source requires time-wise labels");
        train = load_matrix(m.train);
        test_src = load_matrix(m.test);
        src_labels = load_labels_vector(m.labels);
    } else {
        throw UsageError("config: source kind must be \"sine\" or \"dataset\"");
    }

    const json tg = section(cfg, "targets");
    check_keys(tg, {"time_pct", "channel_pct"}, "targets");
    GenTargets targets;
    targets.time_pct = get_num(tg, "time_pct", targets.time_pct);
    targets.channel_pct = get_num(tg, "channel_pct", targets.channel_pct);

    const json in = section(cfg, "inject");
    check_keys(in,
               {"min_segment_len", "tail_fraction", "amplitudes", "max_channels", "pattern_min",
                "pattern_max", "point_share", "rel_tol"},
               "inject");
    GenConfig gc;
    gc.min_segment_len = static_cast<std::size_t>(
        get_int(in, "min_segment_len", static_cast<std::int64_t>(gc.min_segment_len)));
    gc.tail_fraction = get_num(in, "tail_fraction", gc.tail_fraction);
    if (in.contains("amplitudes")) {
        if (!in.at("amplitudes").is_array())
            throw UsageError("config: \"amplitudes\" must be an array of numbers");
        gc.amplitudes.clear();
        for (const json& a : in.at("amplitudes")) {
            if (!a.is_number()) throw UsageError("config: \"amplitudes\" entries must be numbers");
            gc.amplitudes.push_back(a.get<double>());
        }
        if (gc.amplitudes.empty()) throw UsageError("config: \"amplitudes\" must be non-empty");
    }
    gc.max_channels = static_cast<std::size_t>(
        get_int(in, "max_channels", static_cast<std::int64_t>(gc.max_channels)));
    gc.pattern_min = static_cast<std::size_t>(
        get_int(in, "pattern_min", static_cast<std::int64_t>(gc.pattern_min)));
    gc.pattern_max = static_cast<std::size_t>(
        get_int(in, "pattern_max", static_cast<std::int64_t>(gc.pattern_max)));
    gc.point_share = get_num(in, "point_share", gc.point_share);
    gc.rel_tol = get_num(in, "rel_tol", gc.rel_tol);
    gc.seed = seed + 1;  // decouple injection choices from source synthesis

    const Matrix train_std = compute_norm_stats(train).std;
    const GenResult res = generate(test_src, src_labels, train_std, targets, gc);

    const std::string ext = "." + format;
    save_matrix(dir + "/train" + ext, train);
    save_matrix(dir + "/test" + ext, res.test);
    Matrix lab(res.labels_time.size(), 1);
    for (std::size_t i = 0; i < res.labels_time.size(); ++i) lab(i, 0) = res.labels_time[i];
    save_csv_matrix(dir + "/labels.csv", lab);
    save_csv_matrix(dir + "/channel_labels.csv", res.labels_chan);

    DatasetManifest m;
    m.name = name;
    m.channels = train.cols();
    m.window = window;
    m.val_fraction = val_fraction;
    m.train = "train" + ext;
    m.test = "test" + ext;
    m.labels = "labels.csv";
    m.channel_labels = "channel_labels.csv";
    save_manifest(dir + "/manifest.json", m);
    write_text(dir + "/events.log", format_event_log(res.events));

    json report{{"rows", res.test.rows()},
                {"channels", res.test.cols()},
                {"events", res.events.size()},
                {"achieved_time_pct", res.achieved_time_pct},
                {"achieved_channel_pct", res.achieved_chan_pct},
                {"target_time_pct", targets.time_pct},
                {"target_channel_pct", targets.channel_pct}};
    write_text(dir + "/report.json", report.dump(2) + "\n");

    json effective{{"output_dir", dir},
                   {"seed", seed},
                   {"name", name},
                   {"format", format},
                   {"window", window},
                   {"val_fraction", val_fraction},
                   {"targets", {{"time_pct", targets.time_pct}, {"channel_pct", targets.channel_pct}}},
                   {"inject",
                    {{"min_segment_len", gc.min_segment_len},
                     {"tail_fraction", gc.tail_fraction},
                     {"amplitudes", gc.amplitudes},
                     {"max_channels", gc.max_channels},
                     {"pattern_min", gc.pattern_min},
                     {"pattern_max", gc.pattern_max},
                     {"point_share", gc.point_share},
                     {"rel_tol", gc.rel_tol}}}};
    effective["source"] = src;
    echo_config(dir, effective);

    if (res.events.empty())
        out << "generate: pristine benchmark (zero anomaly targets)\n";
    out << "generate: " << res.test.rows() << " rows, " << res.events.size() << " events, "
        << "time-wise " << res.achieved_time_pct << "%, channel-wise " << res.achieved_chan_pct
        << "% -> " << dir << "\n";
}

// ---- train ----

void run_train(const json& cfg, std::ostream& out) {
    check_keys(cfg, {"output_dir", "manifest", "seed", "model", "train", "ablation"},
               "train config");
    const std::string dir = out_dir(cfg);
    const std::uint64_t seed = req_seed(cfg);
    const LoadedData d = load_training_data(req_str(cfg, "manifest"));

    const json mj = section(cfg, "model");
    check_keys(mj, {"d_model", "heads", "layers", "d_ff", "disable_saga", "ape_on_input"},
               "model");
    ModelConfig mc;
    mc.d0 = d.manifest.channels;
    mc.window = d.manifest.window;
    mc.d_model = static_cast<std::size_t>(get_int(mj, "d_model", static_cast<std::int64_t>(mc.d_model)));
    mc.heads = static_cast<std::size_t>(get_int(mj, "heads", static_cast<std::int64_t>(mc.heads)));
    mc.layers = static_cast<std::size_t>(get_int(mj, "layers", static_cast<std::int64_t>(mc.layers)));
    mc.d_ff = static_cast<std::size_t>(get_int(mj, "d_ff", static_cast<std::int64_t>(mc.d_ff)));
    mc.disable_saga = get_bool(mj, "disable_saga", mc.disable_saga);
    mc.ape_on_input = get_bool(mj, "ape_on_input", mc.ape_on_input);

    TrainConfig tc = train_config_from(section(cfg, "train"), seed);

    const std::string ablation = get_str(cfg, "ablation", "none");
    if (ablation == "no-saga") mc.disable_saga = true;
    else if (ablation == "no-assdis-s") tc.disable_assdis_s = true;
    else if (ablation == "l1-baseline") tc.l1_penalty_mode = true;
    else if (ablation == "freeze-g") tc.freeze_g = true;
    else if (ablation == "identity-g") tc.identity_g_init = true;
    else if (ablation != "none")
        throw UsageError("config: unknown ablation \"" + ablation + "\"");

    Rng rng(seed);
    ModelState state = build_model(mc, rng);
    init_graph_logits(state, d.train_head, tc);

    std::ofstream log(dir + "/train_log.jsonl", std::ios::trunc);
    if (!log) throw DataError("cannot write " + dir + "/train_log.jsonl");
    const TrainLog tl = fit(state, d.train_windows.windows, d.val_windows.windows, tc, &log);

    save_checkpoint(dir + "/checkpoint.bin", state, tc);

    json effective{{"output_dir", dir},
                   {"manifest", req_str(cfg, "manifest")},
                   {"seed", seed},
                   {"ablation", ablation},
                   {"model",
                    {{"d_model", mc.d_model},
                     {"heads", mc.heads},
                     {"layers", mc.layers},
                     {"d_ff", mc.d_ff},
                     {"disable_saga", mc.disable_saga},
                     {"ape_on_input", mc.ape_on_input}}},
                   {"train", train_config_json(tc)}};
    echo_config(dir, effective);

    out << "train: " << tl.epochs.size() << " epochs on " << d.train_windows.windows.size()
        << " windows (" << d.val_windows.windows.size() << " validation)";
    if (tl.early_stopped_epoch >= 0) out << ", early stop at epoch " << tl.early_stopped_epoch;
    if (!tl.epochs.empty()) out << ", final val rec " << tl.epochs.back().val_rec;
    out << " -> " << dir << "/checkpoint.bin\n";
}

// ---- score ----

void run_score(const json& cfg, std::ostream& out) {
    check_keys(cfg,
               {"output_dir", "manifest", "checkpoint", "r", "spatial_activation", "format"},
               "score config");
    const std::string dir = out_dir(cfg);
    Checkpoint ck = load_checkpoint(req_str(cfg, "checkpoint"));
    const LoadedData d = load_training_data(req_str(cfg, "manifest"));
    if (d.manifest.channels != ck.state.cfg.d0 || d.manifest.window != ck.state.cfg.window)
        throw DataError("score: checkpoint model shape does not match the manifest");
    const double r = default_r(cfg, d.manifest.name);
    const SpatialActivation act =
        parse_activation(get_str(cfg, "spatial_activation", "sigmoid"));
    const std::string format = get_str(cfg, "format", "csv");
    if (format != "csv" && format != "bin")
        throw UsageError("config: format must be \"csv\" or \"bin\"");

    const Matrix test_norm = normalize(load_matrix(d.manifest.test), d.stats);
    const ScoreBundle b = score_dataset(ck.state, d, test_norm, act);
    if (!b.calibrated_on_validation)
        out << "score: validation split shorter than one window; calibrating on training scores\n";

    const std::string ext = "." + format;
    Matrix tw(b.test_timewise.size(), 1);
    for (std::size_t i = 0; i < b.test_timewise.size(); ++i) tw(i, 0) = b.test_timewise[i];
    save_matrix(dir + "/scores_timewise" + ext, tw);
    const double thr_t = calibrate_threshold(b.cal_timewise, r);

    json meta{{"rows", b.covered_rows},
              {"channels", ck.state.cfg.d0},
              {"window", d.manifest.window},
              {"dropped_rows", b.dropped_rows},
              {"r", r},
              {"protocols", json::object()}};
    meta["protocols"]["timewise"] =
        json{{"file", "scores_timewise" + ext}, {"threshold", thr_t}};

    if (b.joint_available) {
        save_matrix(dir + "/scores_spatiotemporal" + ext, b.test_joint);
        const double thr_s = calibrate_threshold(b.cal_joint, r);
        meta["protocols"]["spatiotemporal"] =
            json{{"file", "scores_spatiotemporal" + ext}, {"threshold", thr_s}};
    }
    write_text(dir + "/score_meta.json", meta.dump(2) + "\n");

    json effective{{"output_dir", dir},
                   {"manifest", req_str(cfg, "manifest")},
                   {"checkpoint", req_str(cfg, "checkpoint")},
                   {"r", r},
                   {"spatial_activation",
                    act == SpatialActivation::Sigmoid ? "sigmoid" : "softmax"},
                   {"format", format}};
    echo_config(dir, effective);

    out << "score: " << b.covered_rows << " rows";
    if (b.dropped_rows) out << " (" << b.dropped_rows << " tail rows beyond the last window)";
    out << ", timewise threshold " << thr_t << " -> " << dir << "\n";
}

// ---- eval ----

void run_eval(const json& cfg, std::ostream& out) {
    check_keys(cfg,
               {"output_dir", "manifest", "checkpoint", "r", "protocol", "ratio_grid_count",
                "spatial_activation", "dumps"},
               "eval config");
    const std::string dir = out_dir(cfg);
    Checkpoint ck = load_checkpoint(req_str(cfg, "checkpoint"));
    const LoadedData d = load_training_data(req_str(cfg, "manifest"));
    if (d.manifest.channels != ck.state.cfg.d0 || d.manifest.window != ck.state.cfg.window)
        throw DataError("eval: checkpoint model shape does not match the manifest");
    if (d.manifest.labels.empty()) throw DataError("eval: the manifest has no label file");
    const double r = default_r(cfg, d.manifest.name);
    const SpatialActivation act =
        parse_activation(get_str(cfg, "spatial_activation", "sigmoid"));
    const std::string protocol = get_str(cfg, "protocol", "auto");
    if (protocol != "auto" && protocol != "timewise" && protocol != "channelwise" &&
        protocol != "both")
        throw UsageError("config: protocol must be auto, timewise, channelwise, or both");
    const std::size_t grid_count =
        static_cast<std::size_t>(get_int(cfg, "ratio_grid_count", 50));
    const bool dumps = get_bool(cfg, "dumps", false);

    const Matrix test_norm = normalize(load_matrix(d.manifest.test), d.stats);
    const ScoreBundle b = score_dataset(ck.state, d, test_norm, act);

    const bool want_channelwise = protocol == "channelwise" || protocol == "both" ||
                                  (protocol == "auto" && b.joint_available &&
                                   !d.manifest.channel_labels.empty());
    if (want_channelwise && d.manifest.channel_labels.empty())
        throw DataError("eval: channel-wise protocol requested but the manifest has no "
                        "channel labels");
    if (want_channelwise && !b.joint_available)
        throw DataError("eval: channel-wise protocol requested but the model was trained "
                        "without the spatial path");

    std::vector<int> labels = load_labels_vector(d.manifest.labels);
    if (labels.size() < b.covered_rows)
        throw DataError("eval: label vector shorter than the scored test prefix");
    labels.resize(b.covered_rows);

    const std::vector<double> grid = default_ratio_grid(grid_count);
    json metrics{{"covered_rows", b.covered_rows},
                 {"dropped_rows", b.dropped_rows},
                 {"r", r}};

    // Time-wise protocol.
    const double thr_t = calibrate_threshold(b.cal_timewise, r);
    const std::vector<int> det_t = detect(b.test_timewise, thr_t);
    const std::vector<int> adj_t = point_adjust(det_t, labels);
    const Prf m_t = prf(adj_t, labels);
    metrics["timewise"] = prf_json(m_t);
    metrics["timewise"]["threshold"] = thr_t;
    const PrCurve curve_t = pr_curve(b.test_timewise, labels, grid);
    metrics["timewise"]["ap"] = curve_t.ap;
    write_pr_curve(dir + "/pr_curve_timewise.csv", curve_t);

    if (want_channelwise) {
        Matrix chan_labels = load_labels_matrix(d.manifest.channel_labels);
        if (chan_labels.cols() != ck.state.cfg.d0)
            throw DataError("eval: channel label width does not match the model");
        if (chan_labels.rows() < b.covered_rows)
            throw DataError("eval: channel labels shorter than the scored test prefix");
        Matrix gt(b.covered_rows, chan_labels.cols());
        for (std::size_t i = 0; i < b.covered_rows; ++i)
            for (std::size_t j = 0; j < chan_labels.cols(); ++j) gt(i, j) = chan_labels(i, j);

        const std::vector<double> flat(b.test_joint.data(),
                                       b.test_joint.data() + b.test_joint.size());
        const double thr_s = calibrate_threshold(b.cal_joint, r);
        Matrix pred(gt.rows(), gt.cols());
        for (std::size_t i = 0; i < pred.size(); ++i)
            pred.data()[i] = flat[i] > thr_s ? 1.0 : 0.0;
        const Prf m_s = prf_matrix(channelwise_adjust(pred, gt), gt);
        metrics["channelwise"] = prf_json(m_s);
        metrics["channelwise"]["threshold"] = thr_s;
        const PrCurve curve_s = pr_curve_channelwise(b.test_joint, gt, grid);
        metrics["channelwise"]["ap"] = curve_s.ap;
        write_pr_curve(dir + "/pr_curve_channelwise.csv", curve_s);

        // A one-dimensional detector broadcast to every channel: the
        // localization baseline the joint score is measured against.
        Matrix bc(gt.rows(), gt.cols());
        for (std::size_t i = 0; i < gt.rows(); ++i)
            for (std::size_t j = 0; j < gt.cols(); ++j) bc(i, j) = det_t[i];
        const Prf m_b = prf_matrix(channelwise_adjust(bc, gt), gt);
        metrics["broadcast_baseline"] = prf_json(m_b);
    }

    if (dumps) {
        const WindowSet ws = make_windows(test_norm, d.manifest.window);
        const Matrix& w0 = ws.windows.front();
        const ForwardOut fo = model_infer(w0, ck.state);
        save_csv_matrix(dir + "/dump_assdis_t.csv", fo.assdis_t);
        if (b.joint_available) {
            save_csv_matrix(dir + "/dump_as_ts.csv",
                            score_spatiotemporal(ck.state, w0, b.spatial_stats, act));
            for (std::size_t l = 0; l < ck.state.layers.size(); ++l) {
                const Matrix& g = ck.state.layers[l].g.value;
                Matrix gt_l(g.rows(), g.cols());
                for (std::size_t i = 0; i < g.size(); ++i)
                    gt_l.data()[i] = 1.0 / (1.0 + std::exp(-g.data()[i]));
                save_csv_matrix(dir + "/dump_g_tilde_" + std::to_string(l) + ".csv", gt_l);
            }
        }
        // Head-mean association maps of the first layer.
        const std::size_t n = w0.rows();
        Matrix s_mean(n, n), p_mean(n, n);
        for (const Matrix& s : fo.s[0])
            for (std::size_t i = 0; i < s.size(); ++i)
                s_mean.data()[i] += s.data()[i] / static_cast<double>(fo.s[0].size());
        for (const Matrix& p : fo.p[0])
            for (std::size_t i = 0; i < p.size(); ++i)
                p_mean.data()[i] += p.data()[i] / static_cast<double>(fo.p[0].size());
        save_csv_matrix(dir + "/dump_s_mean.csv", s_mean);
        save_csv_matrix(dir + "/dump_p_mean.csv", p_mean);
    }

    write_text(dir + "/metrics.json", metrics.dump(2) + "\n");

    json effective{{"output_dir", dir},
                   {"manifest", req_str(cfg, "manifest")},
                   {"checkpoint", req_str(cfg, "checkpoint")},
                   {"r", r},
                   {"protocol", protocol},
                   {"ratio_grid_count", grid_count},
                   {"spatial_activation",
                    act == SpatialActivation::Sigmoid ? "sigmoid" : "softmax"},
                   {"dumps", dumps}};
    echo_config(dir, effective);

    out << "eval: timewise P " << m_t.precision << " R " << m_t.recall << " F1 " << m_t.f1
        << " AP " << curve_t.ap;
    if (metrics.contains("channelwise"))
        out << "; channelwise F1 " << metrics["channelwise"]["f1"].get<double>();
    out << " -> " << dir << "/metrics.json\n";
}

// ---- CLI override plumbing ----

json parse_override(const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw UsageError("--set expects key.path=value, got \"" + assignment + "\"");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // unquoted strings stay strings
    }
    // Build the nested object inside-out.
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
        if (c == '.') {
            if (cur.empty()) throw UsageError("--set: empty path component in \"" + path + "\"");
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (cur.empty()) throw UsageError("--set: empty path component in \"" + path + "\"");
    parts.push_back(cur);
    json nested = value;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) nested = json{{*it, nested}};
    return nested;
}

void merge_config(json& base, const json& overrides) {
    if (!overrides.is_object() || !base.is_object()) {
        base = overrides;
        return;
    }
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        if (base.contains(it.key()) && base.at(it.key()).is_object() && it.value().is_object())
            merge_config(base.at(it.key()), it.value());
        else
            base[it.key()] = it.value();
    }
}

}  // namespace post
