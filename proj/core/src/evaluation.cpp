#include "bikeflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "bikeflow/csv.hpp"
#include "bikeflow/errors.hpp"

namespace bikeflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": " + std::to_string(a) + " predictions for " + std::to_string(b) +
                         " targets");
    }
    if (a == 0) throw DomainError(std::string(what) + ": empty test set");
}

double mean_of_draws(const MixtureParams& p, RngStream rng, std::size_t draws) {
    double sum = 0.0;
    for (std::size_t d = 0; d < draws; ++d) sum += sample(p, rng);
    return sum / static_cast<double>(draws);
}

}  // namespace

GofReport evaluate_mixtures(const std::string& model_id, std::span<const MixtureParams> mixtures,
                            std::span<const double> targets, const RngStream& rng, std::size_t draws) {
    check_lengths(mixtures.size(), targets.size(), "evaluate");
    if (draws == 0) throw DomainError("evaluate: need at least one draw");
    GofReport r;
    r.model_id = model_id;
    r.samples = targets.size();
    r.draws = draws;
    r.has_draws = true;
    r.sample_means.resize(targets.size());
    double nll_mu = 0.0, nll_hat = 0.0, mse_mu = 0.0, mse_hat = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto& p = mixtures[i];
        const double y = targets[i];
        RngStream s = rng.child(i);
        double sum = 0.0, sq = 0.0, comp_nll = 0.0;
        for (std::size_t d = 0; d < draws; ++d) {
            std::size_t c = 0;
            const double v = sample(p, s, &c);
            sum += v;
            sq += (v - y) * (v - y);
            comp_nll -= log_gaussian(y, p.mu[c], p.nu[c]);
        }
        const double m = sum / static_cast<double>(draws);
        r.sample_means[i] = m;
        mse_mu += (m - y) * (m - y);
        mse_hat += sq / static_cast<double>(draws);
        nll_hat += comp_nll / static_cast<double>(draws);
        nll_mu -= mixture_log_density(y, p);
    }
    const double n = static_cast<double>(targets.size());
    r.nll_mu = nll_mu / n;
    r.nll_hat = nll_hat / n;
    r.mse_mu = mse_mu / n;
    r.mse_hat = mse_hat / n;
    return r;
}

GofReport evaluate_point(const std::string& model_id, std::span<const double> predictions,
                         std::span<const double> targets, double variance) {
    check_lengths(predictions.size(), targets.size(), "evaluate");
    if (!(variance > 0.0)) throw DomainError("evaluate: residual variance must be positive");
    GofReport r;
    r.model_id = model_id;
    r.samples = targets.size();
    r.nll_hat = r.mse_hat = kNaN;
    r.sample_means.assign(predictions.begin(), predictions.end());
    double nll = 0.0, mse = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double e = predictions[i] - targets[i];
        mse += e * e;
        nll -= log_gaussian(targets[i], predictions[i], variance);
    }
    r.mse_mu = mse / static_cast<double>(targets.size());
    r.nll_mu = nll / static_cast<double>(targets.size());
    return r;
}

std::vector<Prediction> predict_all(const TrainedModel& model, std::span<const SequenceSample> samples) {
    BatchEvaluator eval;
    std::vector<Prediction> out;
    out.reserve(samples.size());
    std::vector<const Matrix*> seqs;
    for (std::size_t start = 0; start < samples.size(); start += 512) {
        const std::size_t end = std::min(samples.size(), start + 512);
        seqs.clear();
        for (std::size_t i = start; i < end; ++i) seqs.push_back(&samples[i].x);
        auto preds = eval.predict(model.config, model.weights, seqs);
        for (auto& p : preds) out.push_back(std::move(p));
    }
    return out;
}

GofReport evaluate(const TrainedModel& model, std::span<const SequenceSample> samples, const RngStream& rng,
                   std::size_t draws, const std::string& model_id) {
    if (samples.empty()) throw DomainError("evaluate: empty test set");
    const std::string id = model_id.empty() ? std::string(to_string(model.config.architecture)) : model_id;
    const auto preds = predict_all(model, samples);
    Vector targets(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) targets[i] = samples[i].y;
    if (model.config.is_mixture()) {
        std::vector<MixtureParams> mix;
        mix.reserve(preds.size());
        for (const auto& p : preds) mix.push_back(p.mixture);
        return evaluate_mixtures(id, mix, targets, rng, draws);
    }
    Vector point(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) point[i] = preds[i].value;
    return evaluate_point(id, point, targets, model.residual_variance);
}

double improvement_pct(double mse_model, double mse_reference) {
    if (!(mse_reference > 0.0)) throw DomainError("improvement_pct: reference MSE must be positive");
    return 100.0 * (mse_reference - mse_model) / mse_reference;
}

std::string gof_csv(std::span<const GofReport> reports) {
    std::string out = "model,samples,draws,nll_mu,nll_hat,mse_mu,mse_hat\n";
    for (const auto& r : reports) {
        out += csv_join({r.model_id, std::to_string(r.samples), std::to_string(r.draws), format_double(r.nll_mu),
                         format_double(r.nll_hat), format_double(r.mse_mu), format_double(r.mse_hat)}) +
               "\n";
    }
    return out;
}

std::string gof_table(std::span<const GofReport> reports, const std::string& reference) {
    const GofReport* ref = nullptr;
    for (const auto& r : reports)
        if (r.model_id == reference) ref = &r;
    auto fmt = [](double v) {
        if (std::isnan(v)) return std::string("-");
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    std::vector<std::vector<std::string>> rows = {{"model", "-logL_mu", "-logL_hat", "mse_mu", "mse_hat"}};
    if (ref) rows[0].push_back("improvement_%");
    for (const auto& r : reports) {
        rows.push_back({r.model_id, fmt(r.nll_mu), fmt(r.nll_hat), fmt(r.mse_mu), fmt(r.mse_hat)});
        if (ref) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.1f", improvement_pct(r.mse_mu, ref->mse_mu));
            rows.back().push_back(buf);
        }
    }
    std::vector<std::size_t> w(rows[0].size(), 0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < r.size(); ++c) w[c] = std::max(w[c], r[c].size());
    std::string out;
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < r.size(); ++c) {
            if (c == 0) {
                out += r[c] + std::string(w[c] - r[c].size(), ' ');
            } else {
                out += "  " + std::string(w[c] - r[c].size(), ' ') + r[c];
            }
        }
        out += "\n";
    }
    return out;
}

HeatBins heat_bins(std::span<const double> actual, std::span<const double> estimated, std::size_t n_bins) {
    if (actual.size() != estimated.size()) {
        throw ShapeError("heat_bins: " + std::to_string(actual.size()) + " actual values vs " +
                         std::to_string(estimated.size()) + " estimates");
    }
    if (n_bins < 2) throw DomainError("heat_bins: need at least 2 bins");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (auto s : {actual, estimated})
        for (double v : s) {
            if (!std::isfinite(v)) throw DomainError("heat_bins: non-finite value");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (actual.empty()) lo = 0.0, hi = 1.0;
    if (hi <= lo) lo -= 0.5, hi += 0.5;
    HeatBins b;
    b.bins = n_bins;
    b.edges.resize(n_bins + 1);
    for (std::size_t k = 0; k <= n_bins; ++k) b.edges[k] = lo + (hi - lo) * static_cast<double>(k) / n_bins;
    b.counts.assign(n_bins * n_bins, 0);
    auto bin = [&](double v) {
        const auto k = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(n_bins));
        return std::min(k, n_bins - 1);
    };
    for (std::size_t i = 0; i < actual.size(); ++i) ++b.counts[bin(actual[i]) * n_bins + bin(estimated[i])];
    b.total = actual.size();
    return b;
}

std::string heat_bins_csv(const HeatBins& b) {
    std::string out = "actual_lo,actual_hi,estimated_lo,estimated_hi,count\n";
    for (std::size_t a = 0; a < b.bins; ++a)
        for (std::size_t e = 0; e < b.bins; ++e) {
            out += format_double(b.edges[a]) + "," + format_double(b.edges[a + 1]) + "," + format_double(b.edges[e]) +
                   "," + format_double(b.edges[e + 1]) + "," + std::to_string(b.at(a, e)) + "\n";
        }
    return out;
}

std::vector<WeeklyRow> weekly_series(const TrainedModel& model, std::span<const SequenceSample> samples,
                                     const std::string& station, TimePoint start, const FactorTable& table,
                                     const RngStream& rng, int hours, std::size_t draws, SvfVolumeMode mode) {
    if (hours < 1) throw DomainError("weekly_series: window must be at least one hour");
    std::map<TimePoint, std::size_t> index;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].station_id == station) index[samples[i].hour] = i;
    std::vector<std::size_t> picked;
    std::string missing;
    std::size_t n_missing = 0;
    for (int h = 0; h < hours; ++h) {
        const TimePoint t = start + std::chrono::hours{h};
        auto it = index.find(t);
        if (it == index.end()) {
            if (n_missing < 20) missing += (missing.empty() ? "" : ", ") + format_timestamp(t);
            ++n_missing;
        } else {
            picked.push_back(it->second);
        }
    }
    if (n_missing) {
        throw DataError("weekly_series: station " + station + " has " + std::to_string(n_missing) +
                        " missing hours in the window: " + missing + (n_missing > 20 ? ", ..." : ""));
    }
    std::vector<SequenceSample> window;
    window.reserve(picked.size());
    for (std::size_t i : picked) window.push_back(samples[i]);
    const auto preds = predict_all(model, window);
    std::vector<WeeklyRow> rows;
    for (std::size_t k = 0; k < picked.size(); ++k) {
        const auto& s = samples[picked[k]];
        WeeklyRow r;
        r.hour = s.hour;
        r.actual = s.y;
        r.model = model.config.is_mixture() ? mean_of_draws(preds[k].mixture, rng.child(picked[k]), draws)
                                            : preds[k].value;
        r.svf = model.stats.standardize_target(svf_estimate(s, table, mode));
        rows.push_back(r);
    }
    return rows;
}

std::string weekly_csv(std::span<const WeeklyRow> rows) {
    std::string out = "hour_utc,actual,model,svf\n";
    for (const auto& r : rows) {
        out += format_timestamp(r.hour) + "," + format_double(r.actual) + "," + format_double(r.model) + "," +
               format_double(r.svf) + "\n";
    }
    return out;
}

}  // namespace bikeflow
