// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../unit/quadrature.hpp"
#include "bikeflow/baselines.hpp"
#include "bikeflow/config.hpp"
#include "bikeflow/crash.hpp"
#include "bikeflow/csv.hpp"
#include "bikeflow/evaluation.hpp"
#include "bikeflow/synthetic.hpp"
#include "bikeflow/training.hpp"
#include "commands.hpp"

using namespace bikeflow;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7}); }

MixtureParams random_mixture(RngStream& rng) {
    const std::size_t a = 1 + rng.below(8);
    Vector logits(a);
    for (auto& l : logits) l = 2.0 * rng.normal();
    MixtureParams p;
    p.alpha = stable_softmax(logits);
    for (std::size_t i = 0; i < a; ++i) {
        p.mu.push_back(3.0 * rng.normal());
        p.nu.push_back(std::exp(rng.uniform(-6.0, 2.0)));
    }
    return p;
}

// ---------------------------------------------------------------------------

Outcome parameter_counts() {
    struct Row {
        Architecture arch;
        std::size_t k, extra, expected;
    };
    const Row rows[] = {{Architecture::lstm_regression, 32, 0, 6561},        {Architecture::lstm_regression, 64, 0, 21313},
                        {Architecture::lstm_dense_regression, 32, 6, 6733},  {Architecture::lstm_dense_regression, 64, 6, 21645},
                        {Architecture::lstm_mdn, 32, 6, 7122},               {Architecture::lstm_mdn, 32, 8, 7320},
                        {Architecture::lstm_mdn, 64, 6, 22418},              {Architecture::lstm_mdn, 64, 8, 22808},
                        {Architecture::mlp_baseline, 0, 0, 162025}};
    std::string got;
    bool ok = true;
    for (const auto& r : rows) {
        ModelConfig c;
        c.architecture = r.arch;
        c.hidden = r.k;
        c.components = r.extra;
        c.dense_width = r.extra;
        c.features = 18;
        c.steps = 6;
        const std::size_t n = param_count(c);
        ok = ok && n == r.expected;
        got += (got.empty() ? "" : " ") + std::to_string(n);
    }
    return {ok, got};
}

Outcome gradients() {
    double worst = 0;
    for (int seed = 0; seed < 20; ++seed) {
        RngStream rng(1000 + static_cast<std::uint64_t>(seed));
        ModelConfig cfg;
        cfg.architecture = Architecture::lstm_mdn;
        cfg.hidden = 4;
        cfg.components = 3;
        cfg.features = 3;
        cfg.steps = 6;
        cfg.dropout = 0.2;
        ModelWeights w = ModelWeights::zeros(cfg);
        for (auto& t : w.tensors(cfg))
            for (double& v : t.values) v = 0.5 * rng.normal();
        std::vector<Matrix> seqs;
        Vector ys;
        std::vector<DropoutMasks> masks;
        for (int b = 0; b < 3; ++b) {
            Matrix x(6, 3);
            for (auto& v : x.data()) v = rng.normal();
            seqs.push_back(std::move(x));
            ys.push_back(rng.normal());
            if (seed % 2) masks.push_back(draw_masks(cfg, rng));
        }
        std::vector<const Matrix*> ptrs;
        for (auto& s : seqs) ptrs.push_back(&s);
        BatchEvaluator ev;
        ModelWeights grads = ModelWeights::zeros(cfg);
        ev.evaluate(cfg, w, ptrs, ys, masks, &grads);
        ModelWeights probe = w;
        auto pv = probe.tensors(cfg);
        auto gv = grads.tensors(cfg);
        const double eps = 1e-5;
        for (std::size_t t = 0; t < pv.size(); ++t)
            for (std::size_t i = 0; i < pv[t].values.size(); ++i) {
                const double orig = pv[t].values[i];
                pv[t].values[i] = orig + eps;
                const double up = ev.evaluate(cfg, probe, ptrs, ys, masks, nullptr);
                pv[t].values[i] = orig - eps;
                const double down = ev.evaluate(cfg, probe, ptrs, ys, masks, nullptr);
                pv[t].values[i] = orig;
                worst = std::max(worst, rel_err((up - down) / (2 * eps), gv[t].values[i]));
            }
    }
    return {worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " over 20 seeds"};
}

Outcome density_validity() {
    RngStream rng(77);
    double worst_alpha = 0, worst_mass = 0;
    for (int i = 0; i < 1000; ++i) {
        const MixtureParams p = random_mixture(rng);
        double s = 0;
        for (double a : p.alpha) s += a;
        worst_alpha = std::max(worst_alpha, std::abs(s - 1.0));
        const double mass = testing::mixture_integral(p, [](double) { return 1.0; }, 1e-10);
        worst_mass = std::max(worst_mass, std::abs(mass - 1.0));
    }
    return {worst_alpha <= 1e-12 && worst_mass <= 1e-6,
            "max |sum alpha - 1| " + fmt("%.1e", worst_alpha) + ", max |integral - 1| " + fmt("%.1e", worst_mass)};
}

Outcome sampling() {
    RngStream rng(78);
    const int n = 100000;
    double worst_mean = 0, worst_var = 0;
    for (int m = 0; m < 50; ++m) {
        const MixtureParams p = random_mixture(rng);
        RngStream draws = rng.child(static_cast<std::uint64_t>(m));
        double s1 = 0, s2 = 0, s4 = 0;
        const double mean = mixture_mean(p), var = mixture_variance(p);
        std::vector<double> v(n);
        for (auto& x : v) {
            x = sample(p, draws);
            s1 += x;
        }
        const double em = s1 / n;
        for (double x : v) {
            s2 += (x - em) * (x - em);
            s4 += std::pow(x - mean, 4);
        }
        const double ev = s2 / (n - 1);
        const double se_mean = std::sqrt(var / n);
        const double se_var = std::sqrt(std::max(s4 / n - var * var, 1e-300) / n);
        worst_mean = std::max(worst_mean, std::abs(em - mean) / se_mean);
        worst_var = std::max(worst_var, std::abs(ev - var) / se_var);
    }
    return {worst_mean < 3 && worst_var < 3,
            "max |z| mean " + fmt("%.2f", worst_mean) + ", variance " + fmt("%.2f", worst_var)};
}

// Shared by the recovery and ordering criteria.
struct Recovery {
    bool ran = false;
    GofReport report;
    double true_nll = 0, mse_svf = 0, mse_mean = 0, train_seconds = 0;
    int epochs = 0;
    std::size_t samples = 0;
};

const Recovery& recovery(int max_epochs, std::size_t batch) {
    static Recovery r;
    if (r.ran) return r;
    r.ran = true;
    const GeneratorConfig gc;
    const SyntheticPanel panel = generate(gc);
    const auto imputed = impute_wind(panel.weather, panel.fallback_weather);
    const auto roster = default_roster();
    auto raw = assemble_raw(imputed.records, panel.counts, panel.holidays, roster).samples;
    r.samples = raw.size();
    const auto split = split_dataset(raw.size(), 7);
    std::vector<SequenceSample> tr, va, te;
    for (auto i : split.train) tr.push_back(raw[i]);
    for (auto i : split.validation) va.push_back(raw[i]);
    for (auto i : split.test) te.push_back(raw[i]);
    const auto stats = fit_standardization(tr, feature_names(roster));
    r.true_nll = true_nll(gc, imputed.records, te, &stats);

    const FactorTable flat = flat_factor_table();
    double train_mean = 0;
    for (const auto& s : tr) train_mean += stats.standardize_target(s.y);
    train_mean /= static_cast<double>(tr.size());
    for (const auto& s : te) {
        const double y = stats.standardize_target(s.y);
        const double e = stats.standardize_target(svf_estimate(s, flat)) - y;
        r.mse_svf += e * e;
        r.mse_mean += (train_mean - y) * (train_mean - y);
    }
    r.mse_svf /= static_cast<double>(te.size());
    r.mse_mean /= static_cast<double>(te.size());

    ModelConfig mc;
    mc.hidden = 32;
    mc.components = 6;
    TrainConfig tc;
    tc.seed = 11;
    tc.max_epochs = max_epochs;
    tc.batch_size = batch;
    const auto t0 = Clock::now();
    const TrainedModel model = train(mc, tc, standardize(tr, stats), standardize(va, stats), stats);
    r.train_seconds = seconds_since(t0);
    r.epochs = model.epochs_run();
    r.report = evaluate(model, standardize(te, stats), RngStream(5));
    return r;
}

Outcome synthetic_recovery(int max_epochs, std::size_t batch) {
    const Recovery& r = recovery(max_epochs, batch);
    const double gap = (r.report.nll_mu - r.true_nll) / std::abs(r.true_nll);
    const bool ok = gap <= 0.05 && r.report.mse_mu < r.mse_svf && r.report.mse_mu < r.mse_mean &&
                    r.train_seconds < 900.0;
    std::ostringstream d;
    d << r.samples << " samples, test nll " << fmt("%.4f", r.report.nll_mu) << " vs true " << fmt("%.4f", r.true_nll)
      << " (gap " << fmt("%.1f", 100 * gap) << "%), mse " << fmt("%.4f", r.report.mse_mu) << " vs svf "
      << fmt("%.4f", r.mse_svf) << " / mean " << fmt("%.4f", r.mse_mean) << ", " << r.epochs << " epochs in "
      << fmt("%.0f", r.train_seconds) << " s";
    return {ok, d.str()};
}

Outcome ordering(int max_epochs, std::size_t batch) {
    const GofReport& g = recovery(max_epochs, batch).report;
    return {g.mse_hat > g.mse_mu && g.nll_hat > g.nll_mu,
            "mse_hat " + fmt("%.4f", g.mse_hat) + " > mse_mu " + fmt("%.4f", g.mse_mu) + ", nll_hat " +
                fmt("%.4f", g.nll_hat) + " > nll_mu " + fmt("%.4f", g.nll_mu)};
}

Outcome improvement() {
    const double best = improvement_pct(0.102, 0.377), low = improvement_pct(0.129, 0.377);
    const bool ok = std::round(best * 10) / 10 == 72.9 && std::round(low * 10) / 10 == 65.8 && std::round(low) == 66;
    return {ok, fmt("%.4f%%", best) + " and " + fmt("%.4f%%", low)};
}

// Gradient ascent on the mean log-likelihood as an independent optimizer.
Vector ascent_oracle(const Matrix& x, const Vector& y) {
    const std::size_t n = x.rows(), p = x.cols();
    Vector beta(p, 0.0), grad(p);
    for (int it = 0; it < 2'000'000; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double eta = 0;
            for (std::size_t j = 0; j < p; ++j) eta += x(i, j) * beta[j];
            const double r = y[i] - std::exp(eta);
            for (std::size_t j = 0; j < p; ++j) grad[j] += r * x(i, j) / static_cast<double>(n);
        }
        double norm = 0;
        for (std::size_t j = 0; j < p; ++j) {
            beta[j] += 0.2 * grad[j];
            norm = std::max(norm, std::abs(grad[j]));
        }
        if (norm < 1e-13) break;
    }
    return beta;
}

HourlySeries svf_city_exposure(const SyntheticPanel& panel, const FactorTable& table) {
    std::vector<StationHourEstimate> est;
    est.reserve(panel.counts.size());
    for (const auto& c : panel.counts) {
        SequenceSample s;
        s.hour = c.hour;
        s.aadct = c.aadct;
        s.aawct = c.aawct;
        s.holiday = panel.holidays.is_holiday(date_of(c.hour));
        est.push_back({c.station_id, c.hour, svf_estimate(s, table)});
    }
    return aggregate_exposure(est).values;
}

Outcome poisson(int replications) {
    const auto t0 = Clock::now();
    std::string detail;
    bool ok = true;

    const std::size_t n = 2000;
    Matrix ones(n, 1, 1.0);
    Vector y(n, 0.0);
    for (std::size_t i = 0; i < 160; ++i) y[i * 12] = 1.0;
    const GlmFit icpt = poisson_fit(ones, y);
    const double icpt_err = std::abs(icpt.beta[0] - std::log(0.08));
    ok = ok && icpt.converged && icpt_err <= 1e-10;
    detail += "ln 0.08 error " + fmt("%.1e", icpt_err);

    RngStream rng(90);
    Matrix x(400, 3);
    Vector c(400);
    for (std::size_t i = 0; i < 400; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = rng.normal();
        x(i, 2) = rng.uniform() < 0.4 ? 1.0 : 0.0;
        c[i] = static_cast<double>(rng.poisson(std::exp(-0.5 + 0.6 * x(i, 1) + 0.4 * x(i, 2))));
    }
    const GlmFit fit = poisson_fit(x, c);
    const Vector oracle = ascent_oracle(x, c);
    double beta_err = 0, score = 0;
    for (std::size_t j = 0; j < 3; ++j) {
        beta_err = std::max(beta_err, std::abs(fit.beta[j] - oracle[j]));
        double s = 0;
        for (std::size_t i = 0; i < 400; ++i) {
            double eta = 0;
            for (std::size_t k = 0; k < 3; ++k) eta += x(i, k) * fit.beta[k];
            s += (c[i] - std::exp(eta)) * x(i, j);
        }
        score = std::max(score, std::abs(s));
    }
    ok = ok && fit.converged && beta_err <= 1e-6 && score <= 1e-6;
    detail += ", oracle gap " + fmt("%.1e", beta_err) + ", max score " + fmt("%.1e", score);

    const FactorTable table = example_factor_table();
    int wins = 0;
    for (int r = 0; r < replications; ++r) {
        GeneratorConfig gc;
        gc.seed = 5000 + static_cast<std::uint64_t>(r);
        gc.days = 365;
        const SyntheticPanel panel = generate(gc);
        const std::vector<NamedExposure> exposures{{"aawct", aawct_exposure(panel.counts).values},
                                                   {"svf", svf_city_exposure(panel, table)},
                                                   {"true", panel.true_exposure}};
        const auto cmp = compare_exposures(panel.crash_rows, exposures);
        bool best = true;
        for (std::size_t m = 0; m < 2; ++m) {
            best = best && cmp.models[2].fit && (!cmp.models[m].fit || cmp.models[2].fit->log_likelihood >
                                                                           cmp.models[m].fit->log_likelihood);
        }
        wins += best;
    }
    const double share = static_cast<double>(wins) / replications;
    const double secs = seconds_since(t0);
    ok = ok && share >= 0.95 && secs < 300;
    detail += ", true exposure best in " + std::to_string(wins) + "/" + std::to_string(replications) + ", " +
              fmt("%.0f s", secs);
    return {ok, detail};
}

int cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) std::fprintf(stderr, "bikeflow %s failed: %s\n", args[0].c_str(), err.str().c_str());
    return code;
}

std::map<std::string, std::uint64_t> hash_tree(const fs::path& root) {
    std::map<std::string, std::uint64_t> h;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) h[fs::relative(e.path(), root).string()] = fnv1a(read_text_file(e.path().string()));
    return h;
}

Outcome determinism(const fs::path& work) {
    const fs::path dir = work / "pipeline";
    fs::remove_all(dir);
    auto p = [&](const std::string& a, const std::string& b) { return (dir / a / b).string(); };
    auto pipeline = [&]() {
        const std::vector<std::vector<std::string>> steps = {
            {"synth", "--seed", "21", "--days", "370", "--stations", "2", "--out", (dir / "panel").string()},
            {"ingest", "--weather", p("panel", "weather.csv"), "--fallback", p("panel", "weather_fallback.csv"),
             "--counts", p("panel", "counts.csv"), "--holidays", p("panel", "holidays.csv"), "--out",
             (dir / "ingest").string()},
            {"train", "--seed", "21", "--samples", p("ingest", "samples.csv"), "--hidden", "8", "--components", "3",
             "--max-epochs", "3", "--out", (dir / "train").string()},
            {"evaluate", "--seed", "21", "--model", p("train", "model.txt"), "--samples", p("ingest", "samples.csv"),
             "--out", (dir / "evaluate").string()},
            {"exposure", "--seed", "21", "--model", p("train", "model.txt"), "--samples", p("ingest", "samples.csv"),
             "--out", (dir / "exposure").string()},
            {"crash", "--seed", "21", "--crashes", p("panel", "crashes.csv"), "--weather", p("panel", "weather.csv"),
             "--fallback", p("panel", "weather_fallback.csv"), "--holidays", p("panel", "holidays.csv"), "--exposure",
             "model=" + p("exposure", "exposure_model.csv"), "--exposure", "svf=" + p("exposure", "exposure_svf.csv"),
             "--exposure", "aawct=" + p("exposure", "exposure_aawct.csv"), "--out", (dir / "crash").string()}};
        for (const auto& s : steps)
            if (cli(s) != 0) return false;
        return true;
    };
    if (!pipeline()) return {false, "pipeline failed on the first run"};
    const auto first = hash_tree(dir);
    if (!pipeline()) return {false, "pipeline failed on the second run"};
    const auto second = hash_tree(dir);
    std::size_t differing = 0;
    for (const auto& [name, h] : first) differing += !second.count(name) || second.at(name) != h;
    return {differing == 0 && first.size() == second.size(),
            std::to_string(first.size()) + " files, " + std::to_string(differing) + " differ"};
}

Outcome early_stopping() {
    RngStream rng(3);
    std::vector<SequenceSample> data;
    for (int i = 0; i < 120; ++i) {
        SequenceSample s;
        s.x = Matrix(6, 3);
        for (auto& v : s.x.data()) v = rng.normal();
        s.y = s.x(5, 0) + 0.1 * rng.normal();
        data.push_back(std::move(s));
    }
    std::vector<SequenceSample> tr(data.begin(), data.begin() + 100), va(data.begin() + 100, data.end());
    StandardizationStats stats;
    stats.feature_names = {"a", "b", "c"};
    stats.feature_mean = {0, 0, 0};
    stats.feature_std = {1, 1, 1};
    ModelConfig mc;
    mc.hidden = 4;
    mc.components = 2;
    mc.features = 3;
    const int E = 7, L = 5;
    TrainHooks hooks;
    hooks.validation_override = [](int epoch, double) { return epoch <= E ? 5.0 - 0.1 * epoch : 5.0 + epoch; };
    TrainConfig tc;
    tc.batch_size = 16;
    tc.seed = 4;
    tc.patience = L;
    const TrainedModel model = train(mc, tc, tr, va, stats, hooks);
    tc.max_epochs = E;
    TrainedModel prefix = train(mc, tc, tr, va, stats, hooks);
    ModelWeights a = model.weights, b = prefix.weights;
    bool same = true;
    auto ta = a.tensors(mc), tb = b.tensors(mc);
    for (std::size_t t = 0; t < ta.size(); ++t) same = same && std::equal(ta[t].values.begin(), ta[t].values.end(), tb[t].values.begin(), tb[t].values.end());
    return {model.epochs_run() == E + L && model.best_epoch == E && same,
            "stopped after " + std::to_string(model.epochs_run()) + " epochs (E=" + std::to_string(E) +
                ", L=" + std::to_string(L) + "), best epoch " + std::to_string(model.best_epoch) +
                (same ? ", weights equal the epoch-E run" : ", weights differ from the epoch-E run")};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bikeflow acceptance suite"};
    std::string work = (fs::temp_directory_path() / "bikeflow_acceptance").string();
    std::vector<std::string> only;
    int epochs = 600;
    std::size_t batch = 256;
    int replications = 100;
    app.add_option("--work", work, "scratch directory");
    app.add_option("--only", only, "run only the named criteria");
    app.add_option("--epochs", epochs, "epoch limit for the recovery model");
    app.add_option("--batch", batch, "minibatch size for the recovery model");
    app.add_option("--replications", replications, "crash-model replications");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"parameter-counts", parameter_counts},
        {"gradient-check", gradients},
        {"density-validity", density_validity},
        {"sampling-consistency", sampling},
        {"synthetic-recovery", [&] { return synthetic_recovery(epochs, batch); }},
        {"gof-ordering", [&] { return ordering(epochs, batch); }},
        {"improvement-pct", improvement},
        {"poisson-glm", [&] { return poisson(replications); }},
        {"determinism", [&] { return determinism(work); }},
        {"early-stopping", early_stopping},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %-22s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
