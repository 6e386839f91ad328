// influence-kit: command-line front end for training, influence scoring and
// the validation / triage / attack workflows.
//
// Exit codes: 0 ok, 1 usage or data error, 2 numerical failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "influence/applications.hpp"
#include "influence/dataset.hpp"
#include "influence/influence.hpp"
#include "influence/kernels.hpp"
#include "influence/model_io.hpp"
#include "influence/parallel.hpp"
#include "influence/synth.hpp"
#include "influence/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace influence;

namespace {

constexpr int kExitData = 1;
constexpr int kExitNumerical = 2;

// ------------------------------------------------------------- option sets

struct Globals {
    std::string config;
    std::size_t threads = 0;
    bool no_timestamp = false;
};

struct DataOpts {
    std::string format = "auto";
};

struct IhvpOpts {
    std::string method = "explicit";
    double damping = 0.0;
    double cg_tol = 1e-8;
    int cg_max_iters = 1000;
    int lissa_depth = 5000;
    int lissa_repeats = 10;
    std::optional<double> lissa_scale;
    int lissa_batch = 1;
    std::uint64_t seed = 0;

    IhvpConfig resolve() const {
        IhvpConfig c;
        c.method = parse_ihvp_method(method);
        c.damping = damping;
        c.cg.tol_residual = cg_tol;
        c.cg.max_iters = cg_max_iters;
        c.lissa.depth = lissa_depth;
        c.lissa.repeats = lissa_repeats;
        c.lissa.scale = lissa_scale;
        c.lissa.batch = lissa_batch;
        c.lissa.seed = seed;
        c.validate();
        return c;
    }
};

struct ModelOpts {
    std::string family = "binary_logistic";
    double l2 = 0.01;
    double temperature = 1.0;
    int classes = 2;

    ModelSpec resolve() const {
        ModelSpec s;
        s.family = parse_family(family);
        s.l2 = l2;
        s.temperature = temperature;
        s.n_classes = classes;
        s.validate();
        return s;
    }
};

struct TrainOpts {
    double tol = 1e-8;
    int max_iters = 100;
    std::string optimizer = "newton_cg";

    TrainConfig resolve() const {
        if (!(tol > 0.0)) throw DataError("--tol must be positive");
        if (max_iters <= 0) throw DataError("--max-iters must be positive");
        TrainConfig c;
        c.tol_grad = tol;
        c.max_iters = max_iters;
        c.method = parse_optimizer(optimizer);
        return c;
    }
};

void add_data_opts(CLI::App* cmd, DataOpts& o) {
    cmd->add_option("--format", o.format, "Input format for data files")
        ->check(CLI::IsMember({"auto", "csv", "svmlight"}));
}

void add_ihvp_opts(CLI::App* cmd, IhvpOpts& o) {
    cmd->add_option("--ihvp", o.method, "Inverse-HVP backend")->check(CLI::IsMember({"explicit", "cg", "lissa"}));
    cmd->add_option("--damping", o.damping, "Damping added to the Hessian");
    cmd->add_option("--cg-tol", o.cg_tol, "CG relative residual tolerance");
    cmd->add_option("--cg-max-iters", o.cg_max_iters, "CG iteration cap");
    cmd->add_option("--lissa-depth", o.lissa_depth, "LiSSA recursion depth");
    cmd->add_option("--lissa-repeats", o.lissa_repeats, "LiSSA independent repeats");
    cmd->add_option("--lissa-scale", o.lissa_scale, "LiSSA Hessian scale (default: curvature bound)");
    cmd->add_option("--lissa-batch", o.lissa_batch, "LiSSA mini-batch size");
    cmd->add_option("--seed", o.seed, "LiSSA seed");
}

void add_model_opts(CLI::App* cmd, ModelOpts& o) {
    cmd->add_option("--model-type", o.family, "Loss family");
    cmd->add_option("--l2", o.l2, "L2 strength folded into the loss");
    cmd->add_option("--temperature", o.temperature, "Smooth hinge temperature");
    cmd->add_option("--classes", o.classes, "Class count for multinomial_logistic");
}

void add_train_opts(CLI::App* cmd, TrainOpts& o) {
    cmd->add_option("--tol", o.tol, "Gradient-norm stopping tolerance");
    cmd->add_option("--max-iters", o.max_iters, "Optimizer iteration cap");
    cmd->add_option("--optimizer", o.optimizer, "newton_cg or lbfgs")->check(CLI::IsMember({"newton_cg", "lbfgs"}));
}

// ---------------------------------------------------------------- helpers

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw DataError(what + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw DataError(what + " is empty");
    return out;
}

std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (double v : parse_list(text, what)) {
        if (v < 0 || v != std::floor(v)) throw DataError(what + " must hold non-negative integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

Dataset load_data(const std::string& path, const std::string& format, const ParseOptions& parse) {
    if (is_synth_path(path)) return make_synthetic(path);
    std::string fmt = format;
    if (fmt == "auto") {
        const auto ext = fs::path(path).extension().string();
        fmt = (ext == ".svm" || ext == ".svmlight" || ext == ".libsvm" || ext == ".txt") ? "svmlight" : "csv";
    }
    if (!fs::exists(path)) throw DataError("data file not found: " + path);
    return fmt == "svmlight" ? parse_svmlight(path, parse) : parse_csv(path, parse);
}

ParseOptions parse_options_for(const ModelSpec& spec) {
    ParseOptions p;
    if (spec.family == Family::ridge) p.regression = true;
    if (spec.family == Family::multinomial_logistic) p.n_classes = spec.n_classes;
    return p;
}

ModelArtifact load_model_file(const std::string& path) {
    if (!fs::exists(path)) throw DataError("model file not found: " + path);
    return load_model(path);
}

ExampleRef pick(const Dataset& data, std::size_t idx, const char* what) {
    if (idx >= data.size()) {
        throw DataError(std::string(what) + " " + std::to_string(idx) + " is out of range (size " +
                        std::to_string(data.size()) + ")");
    }
    return data[idx];
}

void log_phase(const std::string& message) { std::cerr << "[influence-kit] " << message << "\n"; }

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
    return buf;
}

/// Echo of every option value for one command plus the globals, as strings,
/// so the block can be fed back through --config.
json resolved_config(const CLI::App& root, const CLI::App& cmd) {
    json out = json::object();
    auto collect = [&](const CLI::App& app) {
        for (const CLI::Option* opt : app.get_options()) {
            const std::string name = opt->get_single_name();
            if (name.empty() || name == "help" || name == "config") continue;
            if (opt->get_type_size() == 0) {
                out[name] = opt->count() > 0;
            } else if (opt->count() > 0) {
                out[name] = opt->results().back();
            } else if (!opt->get_default_str().empty()) {
                out[name] = opt->get_default_str();
            }
        }
    };
    collect(root);
    collect(cmd);
    return out;
}

json ihvp_diagnostics_json(const IhvpDiagnostics& d) {
    json j;
    j["method"] = std::string(ihvp_method_name(d.method));
    j["damping"] = d.damping;
    j["iterations"] = d.iterations;
    j["residual"] = std::isfinite(d.residual) ? json(d.residual) : json(nullptr);
    j["divergence_flag"] = d.diverged;
    if (d.method == IhvpMethod::lissa) {
        j["depth"] = d.depth;
        j["repeats"] = d.repeats;
        j["scale"] = d.scale;
        j["seed"] = d.seed;
    }
    return j;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << text;
}

struct Run {
    const CLI::App* root = nullptr;
    const CLI::App* cmd = nullptr;
    const Globals* globals = nullptr;

    json document(const std::string& command) const {
        json doc;
        doc["format_version"] = 1;
        doc["command"] = command;
        doc["config"] = resolved_config(*root, *cmd);
        if (!globals->no_timestamp) doc["created_at"] = timestamp();
        return doc;
    }

    void emit(const json& doc, const std::string& out_path) const {
        const std::string text = doc.dump(2) + "\n";
        if (out_path.empty()) {
            std::cout << text;
        } else {
            write_text(out_path, text);
        }
    }
};

void headline(json record) { std::cout << record.dump() << std::endl; }

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); }

// --------------------------------------------------------------- commands

struct GenerateCmd {
    std::string data;
    std::string out;
    DataOpts data_opts;
};

void run_generate(const Run& run, const GenerateCmd& c) {
    if (!is_synth_path(c.data)) throw DataError("--data must be a synth: path");
    const Dataset data = make_synthetic(c.data);
    std::string fmt_name = c.data_opts.format;
    if (fmt_name == "auto") fmt_name = fs::path(c.out).extension() == ".svm" ? "svmlight" : "csv";
    if (fmt_name == "svmlight") {
        write_svmlight(data, c.out);
    } else {
        write_csv(data, c.out);
    }
    (void)run;
    headline({{"command", "generate"}, {"n", data.size()}, {"d", data.dim()}, {"out", c.out}});
}

struct TrainCmd {
    std::string data;
    std::string out;
    DataOpts data_opts;
    ModelOpts model;
    TrainOpts train;
};

void run_train(const Run& run, const TrainCmd& c) {
    const ModelSpec spec = c.model.resolve();
    const TrainConfig config = c.train.resolve();
    const Dataset data = load_data(c.data, c.data_opts.format, parse_options_for(spec));
    log_phase("training " + std::string(family_name(spec.family)) + " on n=" + std::to_string(data.size()) +
              " d=" + std::to_string(data.dim()));
    const ModelArtifact model = train(spec, data, config);
    json doc = json::parse(model_to_json(model));
    const json meta = run.document("train");
    for (const auto& [k, v] : meta.items()) {
        if (k != "format_version") doc[k] = v;
    }
    run.emit(doc, c.out);
    headline({{"command", "train"},
              {"objective", model.train_meta.objective},
              {"grad_norm", model.train_meta.grad_norm},
              {"iterations", model.train_meta.iterations}});
}

struct InfluenceCmd {
    std::string model;
    std::string train_data;
    std::string test_data;
    std::size_t test_idx = 0;
    std::string out;
    std::string csv;
    DataOpts data_opts;
    IhvpOpts ihvp;
};

json scores_json(const std::vector<InfluenceScore>& scores) {
    json arr = json::array();
    for (const auto& s : scores) {
        arr.push_back({{"train_idx", s.train_idx},
                       {"i_up_loss", s.i_up_loss},
                       {"predicted_loo_delta", s.predicted_loo_delta}});
    }
    return arr;
}

std::string scores_csv(const std::vector<InfluenceScore>& scores) {
    std::string out = "rank,train_idx,i_up_loss,predicted_loo_delta\n";
    for (std::size_t r = 0; r < scores.size(); ++r) {
        const auto& s = scores[r];
        out += std::to_string(r) + "," + std::to_string(s.train_idx) + "," + fmt(s.i_up_loss) + "," +
               fmt(s.predicted_loo_delta) + "\n";
    }
    return out;
}

json report_json(const Run& run, const std::string& command, const InfluenceReport& report,
                 const IhvpConfig& config) {
    json doc = run.document(command);
    doc["target"] = report.target;
    doc["method"] = std::string(ihvp_method_name(config.method));
    doc["damping"] = config.damping;
    doc["seed"] = config.lissa.seed;
    doc["model_fingerprint"] = report.model_fingerprint;
    doc["diagnostics"] = ihvp_diagnostics_json(report.diagnostics);
    if (!report.note.empty()) doc["note"] = report.note;
    doc["scores"] = scores_json(report.scores);
    return doc;
}

json top_record(const std::string& command, const InfluenceReport& report) {
    json h{{"command", command}, {"n", report.scores.size()}};
    if (!report.scores.empty()) {
        h["top_train_idx"] = report.scores.front().train_idx;
        h["top_i_up_loss"] = report.scores.front().i_up_loss;
    }
    return h;
}

void run_influence(const Run& run, const InfluenceCmd& c) {
    const IhvpConfig config = c.ihvp.resolve();
    const ModelArtifact model = load_model_file(c.model);
    const ParseOptions parse = parse_options_for(model.spec);
    const Dataset train_data = load_data(c.train_data, c.data_opts.format, parse);
    const Dataset test_data = load_data(c.test_data, c.data_opts.format, parse);
    const ExampleRef z_test = pick(test_data, c.test_idx, "--test-idx");
    log_phase("scoring " + std::to_string(train_data.size()) + " training points with " + c.ihvp.method);
    InfluenceEngine engine(model, train_data, config);
    const InfluenceReport report = engine.up_loss_batch(z_test, "test:" + std::to_string(c.test_idx));
    run.emit(report_json(run, "influence", report, config), c.out);
    if (!c.csv.empty()) write_text(c.csv, scores_csv(report.scores));
    headline(top_record("influence", report));
}

struct SelfInfluenceCmd {
    std::string model;
    std::string train_data;
    std::string out;
    std::string csv;
    DataOpts data_opts;
    IhvpOpts ihvp;
};

void run_self_influence(const Run& run, const SelfInfluenceCmd& c) {
    const IhvpConfig config = c.ihvp.resolve();
    const ModelArtifact model = load_model_file(c.model);
    const Dataset train_data = load_data(c.train_data, c.data_opts.format, parse_options_for(model.spec));
    log_phase("self-influence over " + std::to_string(train_data.size()) + " points");
    InfluenceEngine engine(model, train_data, config);
    const InfluenceReport report = engine.self_influence();
    run.emit(report_json(run, "self-influence", report, config), c.out);
    if (!c.csv.empty()) write_text(c.csv, scores_csv(report.scores));
    headline(top_record("self-influence", report));
}

json validation_json(const ValidationRun& v) {
    json j;
    j["pearson_r"] = number_or_null(v.pearson_r);
    j["spearman_r"] = number_or_null(v.spearman_r);
    j["top_k"] = v.top_k;
    json pairs = json::array();
    for (const auto& p : v.pairs) {
        pairs.push_back({{"train_idx", p.train_idx},
                         {"predicted_loo_delta", p.predicted_loo_delta},
                         {"actual_loo_delta", p.actual_loo_delta}});
    }
    j["pairs"] = pairs;
    json failures = json::array();
    for (const auto& f : v.failures) failures.push_back({{"train_idx", f.train_idx}, {"message", f.message}});
    j["failures"] = failures;
    return j;
}

struct LooCmd {
    std::string model;
    std::string train_data;
    std::string test_data;
    std::size_t test_idx = 0;
    std::size_t top_k = 100;
    std::string mode = "removal";
    double fd_step = 1e-4;
    std::string out;
    std::string out_scatter;
    DataOpts data_opts;
    IhvpOpts ihvp;
    TrainOpts retrain;
};

void run_loo(const Run& run, const LooCmd& c) {
    const IhvpConfig config = c.ihvp.resolve();
    LooValidationOptions options;
    options.top_k = c.top_k;
    options.mode = parse_loo_mode(c.mode);
    options.fd_step = c.fd_step;
    options.retrain = c.retrain.resolve();
    const ModelArtifact model = load_model_file(c.model);
    const ParseOptions parse = parse_options_for(model.spec);
    const Dataset train_data = load_data(c.train_data, c.data_opts.format, parse);
    const Dataset test_data = load_data(c.test_data, c.data_opts.format, parse);
    const ExampleRef z_test = pick(test_data, c.test_idx, "--test-idx");
    log_phase("retraining the top " + std::to_string(c.top_k) + " points");
    const ValidationRun v = run_loo_validation(model, train_data, z_test, config, options);
    for (const auto& f : v.failures) {
        std::cerr << "warning: retraining without " << f.train_idx << " failed: " << f.message << "\n";
    }
    json doc = run.document("loo-validate");
    doc["validation"] = validation_json(v);
    doc["diagnostics"] = ihvp_diagnostics_json(v.diagnostics);
    doc["model_fingerprint"] = fingerprint(model.theta);
    run.emit(doc, c.out);
    if (!c.out_scatter.empty()) {
        std::string csv = "train_idx,predicted_loo_delta,actual_loo_delta\n";
        for (const auto& p : v.pairs) {
            csv += std::to_string(p.train_idx) + "," + fmt(p.predicted_loo_delta) + "," + fmt(p.actual_loo_delta) +
                   "\n";
        }
        write_text(c.out_scatter, csv);
    }
    headline({{"command", "loo-validate"},
              {"pearson_r", number_or_null(v.pearson_r)},
              {"spearman_r", number_or_null(v.spearman_r)},
              {"pairs", v.pairs.size()}});
}

struct SweepCmd {
    std::string train_data;
    std::string test_data;
    std::size_t test_idx = 0;
    std::string temperatures = "0.001,0.01,0.1,1";
    double l2 = 0.01;
    double train_temperature = 0.001;
    std::size_t top_k = 100;
    double damping = 0.0;
    bool no_zero_filled = false;
    std::string out;
    std::string out_scatter;
    DataOpts data_opts;
    TrainOpts train;
};

void run_sweep(const Run& run, const SweepCmd& c) {
    HingeSweepOptions options;
    options.temperatures = parse_list(c.temperatures, "--temperatures");
    options.l2 = c.l2;
    options.train_temperature = c.train_temperature;
    options.top_k = c.top_k;
    options.damping = c.damping;
    options.zero_filled = !c.no_zero_filled;
    options.train = c.train.resolve();
    const Dataset train_data = load_data(c.train_data, c.data_opts.format, {});
    const Dataset test_data = load_data(c.test_data, c.data_opts.format, {});
    const ExampleRef z_test = pick(test_data, c.test_idx, "--test-idx");
    log_phase("training smooth hinge at t=" + fmt(c.train_temperature) + " and sweeping " +
              std::to_string(options.temperatures.size()) + " temperatures");
    const HingeSweepResult result = run_smooth_hinge_sweep(train_data, z_test, options);

    json doc = run.document("sweep-hinge");
    doc["model_fingerprint"] = fingerprint(result.model.theta);
    json rows = json::array();
    json head{{"command", "sweep-hinge"}};
    json by_t = json::object();
    std::string csv = "variant,temperature,train_idx,predicted_loo_delta,actual_loo_delta\n";
    for (const auto& row : result.rows) {
        json r = validation_json(row.run);
        r["temperature"] = row.temperature;
        rows.push_back(r);
        by_t[fmt(row.temperature)] = number_or_null(row.run.pearson_r);
        for (const auto& p : row.run.pairs) {
            csv += "smooth," + fmt(row.temperature) + "," + std::to_string(p.train_idx) + "," +
                   fmt(p.predicted_loo_delta) + "," + fmt(p.actual_loo_delta) + "\n";
        }
    }
    doc["sweep"] = rows;
    head["pearson_r"] = by_t;
    if (result.zero_filled) {
        doc["zero_filled"] = validation_json(*result.zero_filled);
        head["zero_filled_pearson_r"] = number_or_null(result.zero_filled->pearson_r);
        for (const auto& p : result.zero_filled->pairs) {
            csv += "zero_filled,," + std::to_string(p.train_idx) + "," + fmt(p.predicted_loo_delta) + "," +
                   fmt(p.actual_loo_delta) + "\n";
        }
    }
    run.emit(doc, c.out);
    if (!c.out_scatter.empty()) write_text(c.out_scatter, csv);
    headline(head);
}

struct FixLabelsCmd {
    std::string train_data;
    std::string test_data;
    double flip_frac = 0.1;
    std::string strategy = "all";
    std::size_t repeats = 1;
    std::uint64_t seed = 0;
    std::string grid = "0,0.05,0.1,0.15,0.2,0.25,0.3";
    std::string out;
    std::string out_curve;
    DataOpts data_opts;
    ModelOpts model;
    TrainOpts train;
    IhvpOpts ihvp;
};

void run_fix_labels(const Run& run, const FixLabelsCmd& c) {
    if (c.repeats == 0) throw DataError("--repeats must be positive");
    const ModelSpec spec = c.model.resolve();
    TriageOptions base;
    base.flip_fraction = c.flip_frac;
    base.inspection_grid = parse_list(c.grid, "--grid");
    base.ihvp = c.ihvp.resolve();
    base.train = c.train.resolve();
    std::vector<TriageStrategy> strategies;
    if (c.strategy == "all") {
        strategies = {TriageStrategy::influence, TriageStrategy::loss, TriageStrategy::random};
    } else {
        strategies = {parse_triage_strategy(c.strategy)};
    }
    const Dataset train_data = load_data(c.train_data, c.data_opts.format, {});
    std::optional<Dataset> test_data;
    if (!c.test_data.empty()) test_data = load_data(c.test_data, c.data_opts.format, {});
    log_phase("triage with " + std::to_string(c.repeats) + " repeats per strategy");

    json doc = run.document("fix-labels");
    json head{{"command", "fix-labels"}};
    std::string csv = "strategy,fraction_checked,mean_fraction_flips_found,se_fraction_flips_found,mean_test_accuracy\n";
    const std::size_t g = base.inspection_grid.size();
    for (const auto strategy : strategies) {
        std::vector<TriageRun> runs;
        for (std::size_t r = 0; r < c.repeats; ++r) {
            TriageOptions o = base;
            o.strategy = strategy;
            o.seed = c.seed + r;
            runs.push_back(run_mislabel_triage(spec, train_data, o, test_data ? &*test_data : nullptr));
        }
        json curve = json::array();
        json runs_json = json::array();
        for (const auto& tr : runs) {
            json points = json::array();
            for (const auto& p : tr.curve) {
                points.push_back({{"fraction_checked", p.fraction_checked},
                                  {"fraction_flips_found", p.fraction_flips_found},
                                  {"test_accuracy", p.test_accuracy}});
            }
            runs_json.push_back({{"seed", tr.seed}, {"flipped", tr.flipped.size()}, {"curve", points}});
        }
        const std::string name(triage_strategy_name(strategy));
        json head_curve = json::object();
        for (std::size_t k = 0; k < g; ++k) {
            double mean = 0.0;
            double acc = 0.0;
            for (const auto& tr : runs) {
                mean += tr.curve[k].fraction_flips_found;
                acc += tr.curve[k].test_accuracy;
            }
            const double m = static_cast<double>(runs.size());
            mean /= m;
            acc /= m;
            double var = 0.0;
            for (const auto& tr : runs) var += std::pow(tr.curve[k].fraction_flips_found - mean, 2);
            const double se = runs.size() > 1 ? std::sqrt(var / (m - 1.0) / m) : 0.0;
            const double f = base.inspection_grid[k];
            curve.push_back({{"fraction_checked", f},
                             {"mean_fraction_flips_found", mean},
                             {"se_fraction_flips_found", se},
                             {"mean_test_accuracy", acc}});
            head_curve[fmt(f)] = mean;
            csv += name + "," + fmt(f) + "," + fmt(mean) + "," + fmt(se) + "," + fmt(acc) + "\n";
        }
        doc["strategies"][name] = {{"mean_curve", curve}, {"runs", runs_json}};
        head["flips_found"][name] = head_curve;
    }
    run.emit(doc, c.out);
    if (!c.out_curve.empty()) write_text(c.out_curve, csv);
    headline(head);
}

struct AttackCmd {
    std::string train_data;
    std::string targets;
    std::string target_idx;
    double alpha = 0.02;
    int levels = 256;
    int iters = 100;
    std::size_t budget = 1;
    double damping = 0.01;
    std::string out;
    std::string out_log;
    std::string out_data;
    DataOpts data_opts;
    ModelOpts model;
    TrainOpts retrain;
};

void run_attack(const Run& run, const AttackCmd& c) {
    const ModelSpec spec = c.model.resolve();
    AttackOptions options;
    options.alpha = c.alpha;
    options.levels = c.levels;
    options.max_iters = c.iters;
    options.budget = c.budget;
    options.damping = c.damping;
    options.retrain = c.retrain.resolve();
    const Dataset train_data = load_data(c.train_data, c.data_opts.format, {});
    Dataset targets = load_data(c.targets, c.data_opts.format, {});
    if (!c.target_idx.empty()) {
        const auto idx = parse_index_list(c.target_idx, "--target-idx");
        for (auto i : idx) pick(targets, i, "--target-idx");
        targets = targets.subset(idx);
    }
    log_phase("attacking " + std::to_string(targets.size()) + " target(s) with budget " + std::to_string(c.budget));
    const AttackState state = run_training_attack(spec, train_data, targets, options);

    json doc = run.document("attack");
    doc["perturbed_indices"] = state.perturbed_indices;
    doc["iterations"] = state.iteration;
    doc["flips"] = state.flips;
    doc["model_fingerprint"] = fingerprint(state.model.theta);
    json log = json::array();
    std::string csv = "iteration,mean_target_loss,sup_displacement,n_flipped,quantization_preserved\n";
    bool preserved = true;
    for (const auto& it : state.log) {
        log.push_back({{"iteration", it.iteration},
                       {"mean_target_loss", it.mean_target_loss},
                       {"sup_displacement", it.sup_displacement},
                       {"flipped", it.flipped},
                       {"quantization_preserved", it.quantization_preserved}});
        preserved = preserved && it.quantization_preserved;
        csv += std::to_string(it.iteration) + "," + fmt(it.mean_target_loss) + "," + fmt(it.sup_displacement) + "," +
               std::to_string(it.flipped.size()) + "," + (it.quantization_preserved ? "true" : "false") + "\n";
    }
    doc["log"] = log;
    run.emit(doc, c.out);
    if (!c.out_log.empty()) write_text(c.out_log, csv);
    if (!c.out_data.empty()) write_csv(state.poisoned, c.out_data);
    headline({{"command", "attack"},
              {"flips", state.flips.size()},
              {"targets", targets.size()},
              {"iterations", state.iteration},
              {"quantization_preserved", preserved}});
}

// ------------------------------------------------------------ config file

/// Splices the JSON config into the argument list right after the
/// subcommand name, so explicit flags (which come later) take precedence.
std::vector<std::string> apply_config(CLI::App& app, std::vector<std::string> args) {
    std::string config_path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].starts_with("--config=")) {
            config_path = args[i].substr(9);
        }
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw DataError("cannot open config file: " + config_path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!cfg.is_object()) throw DataError("config file must hold a JSON object");

    std::size_t cmd_pos = 0;
    CLI::App* cmd = nullptr;
    for (std::size_t i = 1; i < args.size() && !cmd; ++i) {
        for (CLI::App* sub : app.get_subcommands({})) {
            if (sub->get_name() == args[i]) {
                cmd = sub;
                cmd_pos = i;
            }
        }
    }
    if (!cmd) throw DataError("--config needs a subcommand");

    std::vector<std::string> injected;
    for (const auto& [key, value] : cfg.items()) {
        const CLI::Option* opt = nullptr;
        for (const CLI::App* scope : {static_cast<const CLI::App*>(cmd), static_cast<const CLI::App*>(&app)}) {
            for (const CLI::Option* o : scope->get_options()) {
                if (o->get_single_name() == key) opt = o;
            }
            if (opt) break;
        }
        if (!opt || key == "config") throw DataError("config key '" + key + "' is not an option of " + cmd->get_name());
        const std::string flag = "--" + key;
        if (opt->get_type_size() == 0) {
            const bool on = value.is_boolean() ? value.get<bool>() : (value.is_string() && value == "true");
            if (on) injected.push_back(flag);
            continue;
        }
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_array()) {
            for (const auto& item : value) {
                if (!text.empty()) text += ",";
                text += item.is_string() ? item.get<std::string>() : item.dump();
            }
        } else {
            text = value.dump();
        }
        injected.push_back(flag);
        injected.push_back(text);
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(cmd_pos + 1), injected.begin(), injected.end());
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Influence functions for convex models: training, scoring and validation workflows", "influence-kit"};
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->always_capture_default();

    Globals globals;
    app.add_option("--config", globals.config, "JSON file of option values (flags override it)");
    app.add_option("--threads", globals.threads, "Worker threads (default: INFLUENCE_KIT_THREADS or 1)");
    app.add_flag("--no-timestamp", globals.no_timestamp, "Omit created_at from outputs");

    GenerateCmd gen;
    auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic dataset to a file");
    gen_cmd->add_option("--data", gen.data, "synth:<kind>:k=v,... generator")->required();
    gen_cmd->add_option("--out", gen.out, "Output file")->required();
    add_data_opts(gen_cmd, gen.data_opts);

    TrainCmd tr;
    auto* train_cmd = app.add_subcommand("train", "Fit a model and write its JSON artifact");
    train_cmd->add_option("--data", tr.data, "Training data (file or synth: path)")->required();
    train_cmd->add_option("--out", tr.out, "Model output path (stdout when omitted)");
    add_data_opts(train_cmd, tr.data_opts);
    train_cmd->add_option("--model", tr.model.family, "Loss family");
    train_cmd->add_option("--l2", tr.model.l2, "L2 strength folded into the loss");
    train_cmd->add_option("--temperature", tr.model.temperature, "Smooth hinge temperature");
    train_cmd->add_option("--classes", tr.model.classes, "Class count for multinomial_logistic");
    add_train_opts(train_cmd, tr.train);

    InfluenceCmd inf;
    auto* inf_cmd = app.add_subcommand("influence", "Score every training point against one test point");
    inf_cmd->add_option("--model", inf.model, "Model JSON")->required();
    inf_cmd->add_option("--train-data", inf.train_data, "Training data")->required();
    inf_cmd->add_option("--test-data", inf.test_data, "Test data")->required();
    inf_cmd->add_option("--test-idx", inf.test_idx, "Test point index");
    inf_cmd->add_option("--out", inf.out, "Report JSON (stdout when omitted)");
    inf_cmd->add_option("--csv", inf.csv, "Also write the score table as CSV");
    add_data_opts(inf_cmd, inf.data_opts);
    add_ihvp_opts(inf_cmd, inf.ihvp);

    SelfInfluenceCmd self;
    auto* self_cmd = app.add_subcommand("self-influence", "Rank training points by self-influence");
    self_cmd->add_option("--model", self.model, "Model JSON")->required();
    self_cmd->add_option("--train-data", self.train_data, "Training data")->required();
    self_cmd->add_option("--out", self.out, "Report JSON (stdout when omitted)");
    self_cmd->add_option("--csv", self.csv, "Also write the score table as CSV");
    add_data_opts(self_cmd, self.data_opts);
    add_ihvp_opts(self_cmd, self.ihvp);

    LooCmd loo;
    auto* loo_cmd = app.add_subcommand("loo-validate", "Compare predicted with retrained LOO deltas");
    loo_cmd->add_option("--model", loo.model, "Model JSON")->required();
    loo_cmd->add_option("--train-data", loo.train_data, "Training data")->required();
    loo_cmd->add_option("--test-data", loo.test_data, "Test data")->required();
    loo_cmd->add_option("--test-idx", loo.test_idx, "Test point index");
    loo_cmd->add_option("--top-k", loo.top_k, "Points retrained, by |influence|");
    loo_cmd->add_option("--mode", loo.mode, "removal or infinitesimal")
        ->check(CLI::IsMember({"removal", "infinitesimal"}));
    loo_cmd->add_option("--fd-step", loo.fd_step, "Weight step for infinitesimal mode");
    loo_cmd->add_option("--out", loo.out, "Summary JSON (stdout when omitted)");
    loo_cmd->add_option("--out-scatter", loo.out_scatter, "Predicted/actual pairs as CSV");
    add_data_opts(loo_cmd, loo.data_opts);
    add_ihvp_opts(loo_cmd, loo.ihvp);
    add_train_opts(loo_cmd, loo.retrain);

    SweepCmd sweep;
    auto* sweep_cmd = app.add_subcommand("sweep-hinge", "Smooth-hinge temperature sweep against true hinge LOO");
    sweep_cmd->add_option("--train-data", sweep.train_data, "Training data")->required();
    sweep_cmd->add_option("--test-data", sweep.test_data, "Test data")->required();
    sweep_cmd->add_option("--test-idx", sweep.test_idx, "Test point index");
    sweep_cmd->add_option("--temperatures", sweep.temperatures, "Comma-separated influence temperatures");
    sweep_cmd->add_option("--l2", sweep.l2, "L2 strength folded into the loss");
    sweep_cmd->add_option("--train-temperature", sweep.train_temperature, "Temperature of the trained model");
    sweep_cmd->add_option("--top-k", sweep.top_k, "Points retrained per temperature");
    sweep_cmd->add_option("--damping", sweep.damping, "Damping added to the Hessian");
    sweep_cmd->add_flag("--no-zero-filled", sweep.no_zero_filled, "Skip the zero-filled derivative diagnostic");
    sweep_cmd->add_option("--out", sweep.out, "Summary JSON (stdout when omitted)");
    sweep_cmd->add_option("--out-scatter", sweep.out_scatter, "Predicted/actual pairs as CSV");
    add_data_opts(sweep_cmd, sweep.data_opts);
    add_train_opts(sweep_cmd, sweep.train);

    FixLabelsCmd fix;
    auto* fix_cmd = app.add_subcommand("fix-labels", "Mislabel triage by influence, loss or random order");
    fix_cmd->add_option("--train-data", fix.train_data, "Clean training data")->required();
    fix_cmd->add_option("--test-data", fix.test_data, "Accuracy is measured here (default: clean training data)");
    fix_cmd->add_option("--flip-frac", fix.flip_frac, "Fraction of labels flipped");
    fix_cmd->add_option("--strategy", fix.strategy, "influence, loss, random or all")
        ->check(CLI::IsMember({"influence", "loss", "random", "all"}));
    fix_cmd->add_option("--repeats", fix.repeats, "Seeded repeats per strategy (seed, seed+1, ...)");
    fix_cmd->add_option("--seed", fix.seed, "First flip seed");
    fix_cmd->add_option("--grid", fix.grid, "Comma-separated inspected fractions");
    fix_cmd->add_option("--out", fix.out, "Summary JSON (stdout when omitted)");
    fix_cmd->add_option("--out-curve", fix.out_curve, "Mean curves as CSV");
    add_data_opts(fix_cmd, fix.data_opts);
    add_model_opts(fix_cmd, fix.model);
    add_train_opts(fix_cmd, fix.train);
    fix_cmd->add_option("--ihvp", fix.ihvp.method, "Inverse-HVP backend")
        ->check(CLI::IsMember({"explicit", "cg", "lissa"}));
    fix_cmd->add_option("--damping", fix.ihvp.damping, "Damping added to the Hessian");

    AttackCmd atk;
    auto* atk_cmd = app.add_subcommand("attack", "Influence-guided training-set attack");
    atk_cmd->add_option("--train-data", atk.train_data, "Training data with features in [0,1]")->required();
    atk_cmd->add_option("--targets", atk.targets, "Target test points")->required();
    atk_cmd->add_option("--target-idx", atk.target_idx, "Comma-separated target indices (default: all)");
    atk_cmd->add_option("--alpha", atk.alpha, "Sign-step size");
    atk_cmd->add_option("--levels", atk.levels, "Quantization levels");
    atk_cmd->add_option("--iters", atk.iters, "Attack iterations");
    atk_cmd->add_option("--budget", atk.budget, "Training points perturbed");
    atk_cmd->add_option("--damping", atk.damping, "Damping added to the Hessian");
    atk_cmd->add_option("--out", atk.out, "Summary JSON (stdout when omitted)");
    atk_cmd->add_option("--out-log", atk.out_log, "Per-iteration log as CSV");
    atk_cmd->add_option("--out-data", atk.out_data, "Poisoned training set as CSV");
    add_data_opts(atk_cmd, atk.data_opts);
    add_model_opts(atk_cmd, atk.model);
    atk.retrain.max_iters = 100;
    add_train_opts(atk_cmd, atk.retrain);

    std::vector<std::string> args(argv, argv + argc);
    try {
        args = apply_config(app, std::move(args));
        std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
        app.parse(std::move(reversed));
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitData;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }

    if (globals.threads > 0) set_thread_count(globals.threads);
    const Run run{&app, app.get_subcommands().front(), &globals};
    try {
        if (gen_cmd->parsed()) run_generate(run, gen);
        if (train_cmd->parsed()) run_train(run, tr);
        if (inf_cmd->parsed()) run_influence(run, inf);
        if (self_cmd->parsed()) run_self_influence(run, self);
        if (loo_cmd->parsed()) run_loo(run, loo);
        if (sweep_cmd->parsed()) run_sweep(run, sweep);
        if (fix_cmd->parsed()) run_fix_labels(run, fix);
        if (atk_cmd->parsed()) run_attack(run, atk);
    } catch (const IhvpDivergence& e) {
        std::cerr << "error: " << e.what() << "\n"
                  << "diagnostics: " << ihvp_diagnostics_json(e.diagnostics).dump() << "\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const UnsupportedOperation& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
