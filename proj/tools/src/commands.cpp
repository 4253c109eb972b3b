#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <filesystem>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "bikeflow/baselines.hpp"
#include "bikeflow/config.hpp"
#include "bikeflow/crash.hpp"
#include "bikeflow/csv.hpp"
#include "bikeflow/data.hpp"
#include "bikeflow/errors.hpp"
#include "bikeflow/evaluation.hpp"
#include "bikeflow/synthetic.hpp"
#include "bikeflow/training.hpp"

namespace bikeflow::cli {

namespace {

namespace fs = std::filesystem;

std::set<std::string> known_keys() {
    std::set<std::string> k = {
        "seed",
        "out",
        "data.weather",
        "data.fallback_weather",
        "data.counts",
        "data.holidays",
        "data.samples",
        "data.crashes",
        "data.factor_table",
        "data.roster",
        "model.architecture",
        "model.hidden",
        "model.components",
        "model.dense_width",
        "model.mlp_width",
        "model.dropout",
        "train.learning_rate",
        "train.beta1",
        "train.beta2",
        "train.epsilon",
        "train.batch_size",
        "train.max_epochs",
        "train.patience",
        "train.min_improvement",
        "evaluate.model",
        "evaluate.draws",
        "compare.models",
        "compare.station",
        "compare.start",
        "compare.hours",
        "compare.bins",
        "compare.draws",
        "exposure.model",
        "crash.exposures",
    };
    const KeyValueConfig synth = GeneratorConfig().to_config();
    for (const auto& [key, value] : synth.values()) k.insert(key);
    return k;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        const auto b = cur.find_first_not_of(' ');
        const auto e = cur.find_last_not_of(' ');
        if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
    }
    return out;
}

class Run {
public:
    Run(std::string command, KeyValueConfig cfg, std::ostream& out)
        : command_(std::move(command)), cfg_(std::move(cfg)), out_(out) {
        cfg_.reject_unknown(known_keys());
    }

    const KeyValueConfig& cfg() const { return cfg_; }
    std::ostream& log() { return out_; }

    std::uint64_t seed() {
        if (!cfg_.has("seed")) throw ConfigError(cfg_.source() + ": a seed is required (--seed or seed=)");
        seed_ = cfg_.get_u64("seed");
        return *seed_;
    }

    std::string input(const std::string& key) {
        const std::string path = cfg_.get_string(key);
        if (!fs::is_regular_file(path)) {
            throw ConfigError(cfg_.source() + ": " + key + " refers to '" + path + "', which does not exist");
        }
        inputs_.emplace_back(key, path);
        return path;
    }

    void record_input(const std::string& key, const std::string& path) { inputs_.emplace_back(key, path); }

    std::optional<std::string> optional_input(const std::string& key) {
        if (!cfg_.has(key) || cfg_.get_string(key).empty()) return std::nullopt;
        return input(key);
    }

    fs::path out_dir() {
        if (!cfg_.has("out")) throw ConfigError(cfg_.source() + ": an output directory is required (--out or out=)");
        const fs::path dir = cfg_.get_string("out");
        fs::create_directories(dir);
        return dir;
    }

    void write(const std::string& name, const std::string& content) {
        write_text_file((out_dir() / name).string(), content);
        outputs_.emplace_back(name, fnv1a(content));
    }

    void finish() {
        KeyValueConfig m;
        m.set("command", command_);
        m.set("tool_version", kToolVersion);
        m.set("model_format", std::to_string(kModelFormatVersion));
        m.set("seed", seed_ ? std::to_string(*seed_) : std::string("none"));
        std::string config_text;
        for (const auto& [k, v] : cfg_.values()) {
            if (k == "out") continue;
            m.set("config." + k, v);
            config_text += k + "=" + v + "\n";
        }
        m.set("config_hash", hex64(fnv1a(config_text)));
        for (const auto& [key, path] : inputs_) {
            m.set("input." + key + ".path", path);
            m.set("input." + key + ".fnv1a", hex64(fnv1a(read_text_file(path))));
        }
        for (const auto& [name, hash] : outputs_) m.set("output." + name + ".fnv1a", hex64(hash));
        write_text_file((out_dir() / "run_manifest.txt").string(), m.to_text());
    }

private:
    std::string command_;
    KeyValueConfig cfg_;
    std::ostream& out_;
    std::optional<std::uint64_t> seed_;
    std::vector<std::pair<std::string, std::string>> inputs_;
    std::vector<std::pair<std::string, std::uint64_t>> outputs_;
};

ModelConfig model_config(const KeyValueConfig& cfg, std::size_t features) {
    ModelConfig m;
    m.architecture = parse_architecture(cfg.get_string("model.architecture", "lstm-mdn"));
    m.hidden = static_cast<std::size_t>(cfg.get_int("model.hidden", static_cast<long long>(m.hidden)));
    m.components = static_cast<std::size_t>(cfg.get_int("model.components", static_cast<long long>(m.components)));
    m.dense_width = static_cast<std::size_t>(cfg.get_int("model.dense_width", static_cast<long long>(m.dense_width)));
    m.mlp_width = static_cast<std::size_t>(cfg.get_int("model.mlp_width", static_cast<long long>(m.mlp_width)));
    m.dropout = cfg.get_double("model.dropout", m.dropout);
    m.features = features;
    for (const char* key : {"model.hidden", "model.components", "model.dense_width", "model.mlp_width"}) {
        if (cfg.has(key) && cfg.get_int(key) < 1) throw ConfigError(cfg.source() + ": " + key + " must be >= 1");
    }
    m.validate();
    return m;
}

TrainConfig train_config(const KeyValueConfig& cfg) {
    TrainConfig t;
    t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
    t.beta1 = cfg.get_double("train.beta1", t.beta1);
    t.beta2 = cfg.get_double("train.beta2", t.beta2);
    t.epsilon = cfg.get_double("train.epsilon", t.epsilon);
    const long long batch = cfg.get_int("train.batch_size", static_cast<long long>(t.batch_size));
    if (batch < 1) throw ConfigError(cfg.source() + ": train.batch_size must be >= 1");
    t.batch_size = static_cast<std::size_t>(batch);
    t.max_epochs = static_cast<int>(cfg.get_int("train.max_epochs", t.max_epochs));
    t.patience = static_cast<int>(cfg.get_int("train.patience", t.patience));
    t.min_improvement = cfg.get_double("train.min_improvement", t.min_improvement);
    t.validate();
    return t;
}

struct Splits {
    std::vector<SequenceSample> train, validation, test;
};

Splits split_raw(const SampleSet& set, std::uint64_t seed) {
    const auto idx = split_dataset(set.samples.size(), seed);
    Splits s;
    for (auto i : idx.train) s.train.push_back(set.samples[i]);
    for (auto i : idx.validation) s.validation.push_back(set.samples[i]);
    for (auto i : idx.test) s.test.push_back(set.samples[i]);
    return s;
}

void check_features(const SampleSet& set, const TrainedModel& model, const std::string& model_path) {
    if (set.feature_names != model.stats.feature_names) {
        throw DataError("samples and model " + model_path + " use different feature columns");
    }
}

FactorTable factor_table(Run& run) {
    const std::string spec = run.cfg().get_string("data.factor_table", "example");
    if (spec == "example") return example_factor_table();
    if (spec == "flat") return flat_factor_table();
    return load_factor_table(run.input("data.factor_table"));
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

// ---------------------------------------------------------------------------

int cmd_synth(Run& run) {
    KeyValueConfig kv = run.cfg();
    if (kv.has("seed")) kv.set("synth.seed", std::to_string(run.seed()));
    const GeneratorConfig cfg = GeneratorConfig::from_config(kv);
    const SyntheticPanel panel = generate(cfg);
    run.write("weather.csv", weather_csv(panel.weather));
    run.write("weather_fallback.csv", weather_csv(panel.fallback_weather));
    run.write("counts.csv", counts_csv(panel.counts));
    run.write("holidays.csv", holidays_csv(panel.holidays));
    run.write("crashes.csv", crashes_csv(panel.crashes));
    run.write("exposure_true.csv", exposure_csv(panel.true_exposure));
    run.write("manifest.txt", manifest_text(panel));
    run.log() << "synth: " << panel.counts.size() << " station-hours, " << panel.weather.size()
              << " weather rows, " << panel.truncated << " truncated volumes\n";
    return kExitOk;
}

int cmd_ingest(Run& run) {
    const auto weather = load_weather(run.input("data.weather"));
    std::vector<WeatherRecord> fallback;
    if (auto path = run.optional_input("data.fallback_weather")) fallback = load_weather(*path);
    const auto imputed = impute_wind(weather, fallback);
    const auto counts = load_counts(run.input("data.counts"));
    const auto calendar = load_holidays(run.input("data.holidays"));
    std::vector<Feature> roster;
    if (run.cfg().has("data.roster")) {
        for (const auto& name : split_list(run.cfg().get_string("data.roster"))) roster.push_back(parse_feature(name));
    } else {
        roster = default_roster();
    }
    auto result = assemble_raw(imputed.records, counts, calendar, roster);
    SampleSet set{feature_names(roster), std::move(result.samples)};
    run.write("samples.csv", samples_csv(set));
    run.write("drop_report.csv", drop_report_csv(result.drops));
    std::map<std::string, std::size_t> reasons;
    for (const auto& d : result.drops) ++reasons[d.reason];
    KeyValueConfig summary;
    summary.set("counts", std::to_string(counts.size()));
    summary.set("samples", std::to_string(set.samples.size()));
    summary.set("dropped", std::to_string(result.drops.size()));
    for (const auto& [reason, n] : reasons) summary.set("dropped." + reason, std::to_string(n));
    summary.set("wind_imputed", std::to_string(imputed.imputed));
    summary.set("wind_still_missing", std::to_string(imputed.still_missing));
    summary.set("features", std::to_string(set.feature_names.size()));
    run.write("ingest_summary.txt", summary.to_text());
    run.log() << "ingest: " << set.samples.size() << " samples, " << result.drops.size() << " dropped hours\n";
    return kExitOk;
}

int cmd_train(Run& run) {
    const std::uint64_t seed = run.seed();
    const SampleSet set = load_samples(run.input("data.samples"));
    const ModelConfig mc = model_config(run.cfg(), set.feature_names.size());
    TrainConfig tc = train_config(run.cfg());
    tc.seed = seed;
    const Splits raw = split_raw(set, seed);
    const auto stats = fit_standardization(raw.train, set.feature_names);
    const auto tr = standardize(raw.train, stats);
    const auto va = standardize(raw.validation, stats);
    TrainHooks hooks;
    std::ostream& log = run.log();
    hooks.on_epoch = [&log](const EpochRecord& r) {
        if (r.epoch == 1 || r.epoch % 10 == 0) {
            log << "epoch " << r.epoch << " train " << format_fixed(r.train_loss, 5) << " validation "
                << format_fixed(r.val_loss, 5) << "\n";
        }
    };
    const TrainedModel model = train(mc, tc, tr, va, stats, hooks);
    run.write("model.txt", serialize_model(model));
    run.write("history.csv", history_csv(model.history));
    run.log() << "train: " << to_string(mc.architecture) << " with " << param_count(mc) << " parameters, "
              << model.epochs_run() << " epochs, best epoch " << model.best_epoch << "\n";
    return kExitOk;
}

int cmd_evaluate(Run& run) {
    const std::uint64_t seed = run.seed();
    const std::string model_path = run.input("evaluate.model");
    const TrainedModel model = load_model(model_path);
    const SampleSet set = load_samples(run.input("data.samples"));
    check_features(set, model, model_path);
    const auto draws = run.cfg().get_int("evaluate.draws", static_cast<long long>(kPosteriorDraws));
    if (draws < 1) throw ConfigError(run.cfg().source() + ": evaluate.draws must be >= 1");
    const Splits raw = split_raw(set, model.seed);
    const auto test = standardize(raw.test, model.stats);
    const GofReport report =
        evaluate(model, test, RngStream(seed), static_cast<std::size_t>(draws), stem(model_path));
    const std::vector<GofReport> reports = {report};
    run.write("gof.csv", gof_csv(reports));
    const std::string table = gof_table(reports);
    run.write("gof.txt", table);
    run.log() << table;
    return kExitOk;
}

Vector svf_predictions(std::span<const SequenceSample> samples, const FactorTable& table,
                       const StandardizationStats& stats) {
    Vector out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = stats.standardize_target(svf_estimate(samples[i], table));
    return out;
}

double mean_square(std::span<const double> pred, std::span<const SequenceSample> samples) {
    double s = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) s += (pred[i] - samples[i].y) * (pred[i] - samples[i].y);
    return s / static_cast<double>(samples.size());
}

std::optional<TimePoint> first_complete_week(std::span<const SequenceSample> samples, const std::string& station,
                                             int hours) {
    std::set<TimePoint> have;
    for (const auto& s : samples)
        if (s.station_id == station) have.insert(s.hour);
    for (TimePoint t : have) {
        if (hour_of(t) != 0 || day_of_week(date_of(t)) != 0) continue;
        bool ok = true;
        for (int h = 1; h < hours && ok; ++h) ok = have.count(t + std::chrono::hours{h}) != 0;
        if (ok) return t;
    }
    return std::nullopt;
}

int cmd_compare(Run& run) {
    const std::uint64_t seed = run.seed();
    const auto model_paths = split_list(run.cfg().get_string("compare.models"));
    if (model_paths.empty()) throw ConfigError(run.cfg().source() + ": compare.models lists no model");
    std::vector<TrainedModel> models;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < model_paths.size(); ++i) {
        if (!fs::is_regular_file(model_paths[i])) {
            throw ConfigError(run.cfg().source() + ": compare.models refers to '" + model_paths[i] +
                              "', which does not exist");
        }
        run.record_input("compare.models." + std::to_string(i + 1), model_paths[i]);
        models.push_back(load_model(model_paths[i]));
        std::string id = stem(model_paths[i]);
        if (std::find(ids.begin(), ids.end(), id) != ids.end()) id += "_" + std::to_string(i + 1);
        ids.push_back(id);
        if (models.back().seed != models.front().seed) {
            throw ConfigError("compare: models " + model_paths.front() + " and " + model_paths[i] +
                              " were trained with different seeds, so their test splits differ");
        }
    }
    const SampleSet set = load_samples(run.input("data.samples"));
    for (std::size_t i = 0; i < models.size(); ++i) check_features(set, models[i], model_paths[i]);
    const FactorTable table = factor_table(run);
    const auto draws = static_cast<std::size_t>(
        std::max<long long>(1, run.cfg().get_int("compare.draws", static_cast<long long>(kPosteriorDraws))));
    const auto bins = run.cfg().get_int("compare.bins", 20);
    const int hours = static_cast<int>(run.cfg().get_int("compare.hours", kWeeklyHours));
    const RngStream rng(seed);

    const StandardizationStats& stats = models.front().stats;
    const Splits raw = split_raw(set, models.front().seed);
    const auto test = standardize(raw.test, stats);
    const auto validation = standardize(raw.validation, stats);
    Vector targets(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) targets[i] = test[i].y;

    std::vector<GofReport> reports;
    for (std::size_t i = 0; i < models.size(); ++i) {
        reports.push_back(evaluate(models[i], standardize(raw.test, models[i].stats), rng, draws, ids[i]));
        const HeatBins hb = heat_bins(targets, reports.back().sample_means, static_cast<std::size_t>(bins));
        run.write("heat_" + ids[i] + ".csv", heat_bins_csv(hb));
    }
    const Vector svf_test = svf_predictions(test, table, stats);
    const Vector svf_val = svf_predictions(validation, table, stats);
    reports.push_back(evaluate_point("svf", svf_test, targets, mean_square(svf_val, validation)));
    run.write("heat_svf.csv", heat_bins_csv(heat_bins(targets, svf_test, static_cast<std::size_t>(bins))));
    const Vector zeros_val(validation.size(), 0.0);
    reports.push_back(evaluate_point("mean", Vector(test.size(), 0.0), targets, mean_square(zeros_val, validation)));

    run.write("comparison.csv", gof_csv(reports));
    const std::string text = gof_table(reports, "svf");
    run.write("comparison.txt", text);
    run.log() << text;

    const auto all = standardize(set.samples, stats);
    const std::string station =
        run.cfg().get_string("compare.station", set.samples.empty() ? std::string() : set.samples.front().station_id);
    std::optional<TimePoint> start;
    if (run.cfg().has("compare.start")) {
        TimePoint t;
        if (!parse_timestamp(run.cfg().get_string("compare.start"), t)) {
            throw ConfigError(run.cfg().source() + ": compare.start is not a timestamp");
        }
        start = t;
    } else {
        start = first_complete_week(all, station, hours);
    }
    if (!start) {
        run.log() << "compare: no complete " << hours << "-hour window for station " << station
                  << "; weekly series skipped\n";
        return kExitOk;
    }
    for (std::size_t i = 0; i < models.size(); ++i) {
        const auto all_i = standardize(set.samples, models[i].stats);
        const auto rows = weekly_series(models[i], all_i, station, *start, table, rng, hours, draws);
        run.write("weekly_" + ids[i] + ".csv", weekly_csv(rows));
    }
    return kExitOk;
}

int cmd_exposure(Run& run) {
    const std::string model_path = run.input("exposure.model");
    const TrainedModel model = load_model(model_path);
    const SampleSet set = load_samples(run.input("data.samples"));
    check_features(set, model, model_path);
    const FactorTable table = factor_table(run);
    const auto standardized = standardize(set.samples, model.stats);
    const auto preds = predict_all(model, standardized);
    std::vector<StationHourEstimate> model_est, svf_est;
    std::vector<CountRecord> aawct;
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
        const auto& s = set.samples[i];
        model_est.push_back({s.station_id, s.hour, model.stats.invert_target(preds[i].mean())});
        svf_est.push_back({s.station_id, s.hour, svf_estimate(s, table)});
        aawct.push_back({s.station_id, s.hour, s.y, s.aadct, s.aawct});
    }
    const auto e_model = aggregate_exposure(model_est);
    const auto e_svf = aggregate_exposure(svf_est);
    const auto e_aawct = aawct_exposure(aawct);
    run.write("station_model.csv", svf_csv(model_est));
    run.write("station_svf.csv", svf_csv(svf_est));
    run.write("exposure_model.csv", exposure_csv(e_model.values));
    run.write("exposure_svf.csv", exposure_csv(e_svf.values));
    run.write("exposure_aawct.csv", exposure_csv(e_aawct.values));
    KeyValueConfig summary;
    summary.set("hours", std::to_string(e_model.values.size()));
    summary.set("stations", std::to_string(e_model.stations));
    summary.set("incomplete_hours", std::to_string(e_model.incomplete.size()));
    run.write("exposure_summary.txt", summary.to_text());
    run.log() << "exposure: " << e_model.values.size() << " hours over " << e_model.stations << " stations, "
              << e_model.incomplete.size() << " hours with missing stations\n";
    return kExitOk;
}

int cmd_crash(Run& run) {
    const HourlySeries crashes = load_crashes(run.input("data.crashes"));
    const auto weather = load_weather(run.input("data.weather"));
    std::vector<WeatherRecord> fallback;
    if (auto path = run.optional_input("data.fallback_weather")) fallback = load_weather(*path);
    const auto imputed = impute_wind(weather, fallback);
    const auto calendar = load_holidays(run.input("data.holidays"));
    const auto specs = split_list(run.cfg().get_string("crash.exposures"));
    if (specs.empty()) throw ConfigError(run.cfg().source() + ": crash.exposures lists no exposure series");
    std::vector<NamedExposure> exposures;
    for (const auto& spec : specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw ConfigError(run.cfg().source() + ": crash.exposures entry '" + spec + "' is not name=path");
        }
        const std::string name = spec.substr(0, eq);
        const std::string path = spec.substr(eq + 1);
        if (!fs::is_regular_file(path)) {
            throw ConfigError(run.cfg().source() + ": crash.exposures entry '" + name + "' refers to '" + path +
                              "', which does not exist");
        }
        run.record_input("crash.exposures." + name, path);
        exposures.push_back({name, load_exposure(path)});
    }
    const CrashDataset ds = build_crash_dataset(crashes, imputed.records, calendar);
    const ExposureComparison cmp = compare_exposures(ds.rows, exposures);
    run.write("crash_comparison.csv", comparison_csv(cmp));
    const std::string text = comparison_text(cmp);
    run.write("crash_comparison.txt", text);
    KeyValueConfig summary;
    summary.set("crash_hours", std::to_string(crashes.size()));
    summary.set("dropped_weather", std::to_string(ds.dropped_weather));
    summary.set("dropped_missing_exposure", std::to_string(cmp.dropped_missing_exposure));
    summary.set("observations", std::to_string(cmp.observations));
    run.write("crash_summary.txt", summary.to_text());
    run.log() << text;
    run.log() << "crash: " << cmp.observations << " hours used, " << ds.dropped_weather
              << " dropped for incomplete weather, " << cmp.dropped_missing_exposure
              << " dropped for missing exposure\n";
    for (const auto& m : cmp.models)
        if (!m.error.empty()) return kExitNumerical;
    return kExitOk;
}

struct Subcommand {
    CLI::App* app = nullptr;
    int (*handler)(Run&) = nullptr;
    std::string config_path;
    std::deque<std::string> storage;
    std::vector<std::pair<CLI::Option*, std::string>> keyed;
    std::vector<std::string> models;
    std::vector<std::string> exposures;

    void option(const std::string& flag, const std::string& key, const std::string& help) {
        storage.emplace_back();
        keyed.emplace_back(app->add_option(flag, storage.back(), help), key);
    }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hourly bicycle volume estimation with LSTM mixture density networks", "bikeflow"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    std::deque<Subcommand> subs;
    auto add = [&](const std::string& name, const std::string& help, int (*handler)(Run&)) -> Subcommand& {
        Subcommand& s = subs.emplace_back();
        s.app = app.add_subcommand(name, help);
        s.handler = handler;
        s.app->add_option("--config", s.config_path, "key=value configuration file");
        s.option("--seed", "seed", "random seed");
        s.option("--out", "out", "output directory");
        return s;
    };

    auto& synth = add("synth", "generate a synthetic weather/count/crash panel", cmd_synth);
    synth.option("--days", "synth.days", "days to simulate");
    synth.option("--stations", "synth.stations", "number of counting stations");

    auto& ingest = add("ingest", "assemble sequence samples from weather and count CSVs", cmd_ingest);
    ingest.option("--weather", "data.weather", "10-minute weather CSV");
    ingest.option("--fallback", "data.fallback_weather", "fallback station weather CSV for wind imputation");
    ingest.option("--counts", "data.counts", "hourly counts CSV");
    ingest.option("--holidays", "data.holidays", "holiday calendar CSV");

    auto& train = add("train", "train a model on ingested samples", cmd_train);
    train.option("--samples", "data.samples", "samples CSV written by ingest");
    train.option("--architecture", "model.architecture",
                 "lstm-mdn | lstm-regression | lstm-dense-regression | mlp-baseline");
    train.option("--hidden", "model.hidden", "LSTM units");
    train.option("--components", "model.components", "mixture components");
    train.option("--max-epochs", "train.max_epochs", "epoch limit");
    train.option("--patience", "train.patience", "early-stopping patience");

    auto& evaluate_cmd = add("evaluate", "goodness of fit of a model on its test split", cmd_evaluate);
    evaluate_cmd.option("--model", "evaluate.model", "model file");
    evaluate_cmd.option("--samples", "data.samples", "samples CSV");
    evaluate_cmd.option("--draws", "evaluate.draws", "posterior draws per sample");

    auto& compare = add("compare", "Table-1 style comparison with SVF and mean baselines", cmd_compare);
    compare.app->add_option("--model", compare.models, "model file (repeatable)");
    compare.option("--samples", "data.samples", "samples CSV");
    compare.option("--factor-table", "data.factor_table", "factor table CSV, or 'example' / 'flat'");
    compare.option("--station", "compare.station", "station for the weekly series");
    compare.option("--start", "compare.start", "first hour of the weekly series");
    compare.option("--bins", "compare.bins", "heat-map bins per axis");

    auto& exposure = add("exposure", "city-wide hourly exposure series from a model, SVF and AAWCT", cmd_exposure);
    exposure.option("--model", "exposure.model", "model file");
    exposure.option("--samples", "data.samples", "samples CSV");
    exposure.option("--factor-table", "data.factor_table", "factor table CSV, or 'example' / 'flat'");

    auto& crash = add("crash", "Poisson crash models with alternative exposure series", cmd_crash);
    crash.option("--crashes", "data.crashes", "hourly crash counts CSV");
    crash.option("--weather", "data.weather", "10-minute weather CSV");
    crash.option("--fallback", "data.fallback_weather", "fallback station weather CSV");
    crash.option("--holidays", "data.holidays", "holiday calendar CSV");
    crash.app->add_option("--exposure", crash.exposures, "name=path exposure CSV (repeatable)");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    for (auto& s : subs) {
        if (!s.app->parsed()) continue;
        try {
            KeyValueConfig cfg = s.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(s.config_path);
            for (const auto& [opt, key] : s.keyed)
                if (opt->count() > 0) cfg.set(key, opt->as<std::string>());
            auto join = [](const std::vector<std::string>& v) {
                std::string j;
                for (const auto& x : v) j += (j.empty() ? "" : ",") + x;
                return j;
            };
            if (!s.models.empty()) cfg.set("compare.models", join(s.models));
            if (!s.exposures.empty()) cfg.set("crash.exposures", join(s.exposures));
            Run run(s.app->get_name(), std::move(cfg), out);
            const int code = s.handler(run);
            run.finish();
            return code;
        } catch (const ConfigError& e) {
            err << "config error: " << e.what() << "\n";
            return kExitConfig;
        } catch (const DataError& e) {
            err << "data error: " << e.what() << "\n";
            return kExitData;
        } catch (const NumericalError& e) {
            err << "numerical error: " << e.what() << "\n";
            return kExitNumerical;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << "\n";
            return kExitData;
        }
    }
    return kExitConfig;
}

}  // namespace bikeflow::cli
