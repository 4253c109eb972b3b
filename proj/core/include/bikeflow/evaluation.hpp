#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bikeflow/baselines.hpp"
#include "bikeflow/training.hpp"

namespace bikeflow {

inline constexpr std::size_t kPosteriorDraws = 100;

/// Goodness of fit on the standardized target scale. nll_hat and mse_hat are
/// NaN for point-estimate models.
struct GofReport {
    std::string model_id;
    std::size_t samples = 0;
    std::size_t draws = 0;
    bool has_draws = false;
    double nll_mu = 0.0;
    double nll_hat = 0.0;
    double mse_mu = 0.0;
    double mse_hat = 0.0;
    Vector sample_means;  // mean of draws per sample, or the point prediction
};

/// Scores predicted mixtures: `draws` posterior draws per sample from
/// rng.child(sample index). nll_hat scores the target under the component
/// that produced each draw.
GofReport evaluate_mixtures(const std::string& model_id, std::span<const MixtureParams> mixtures,
                            std::span<const double> targets, const RngStream& rng,
                            std::size_t draws = kPosteriorDraws);

/// Point predictions scored by MSE and by a Gaussian NLL with the given
/// variance.
GofReport evaluate_point(const std::string& model_id, std::span<const double> predictions,
                         std::span<const double> targets, double variance);

/// Evaluates a trained model on standardized samples. Throws DomainError on
/// an empty set.
GofReport evaluate(const TrainedModel& model, std::span<const SequenceSample> samples, const RngStream& rng,
                   std::size_t draws = kPosteriorDraws, const std::string& model_id = {});

/// Model predictions in sample order, inference mode.
std::vector<Prediction> predict_all(const TrainedModel& model, std::span<const SequenceSample> samples);

/// 100 (reference - model) / reference. Throws DomainError unless
/// reference > 0.
double improvement_pct(double mse_model, double mse_reference);

/// model,samples,draws,nll_mu,nll_hat,mse_mu,mse_hat
std::string gof_csv(std::span<const GofReport> reports);
/// Aligned table; improvements are relative to the row named `reference`
/// when present.
std::string gof_table(std::span<const GofReport> reports, const std::string& reference = {});

struct HeatBins {
    std::size_t bins = 0;
    Vector edges;                     // bins + 1 shared by both axes
    std::vector<std::size_t> counts;  // row = actual bin, column = estimated bin
    std::size_t total = 0;

    std::size_t at(std::size_t actual_bin, std::size_t estimated_bin) const {
        return counts[actual_bin * bins + estimated_bin];
    }
};

/// Joint histogram over uniform bins spanning the min and max of both lists.
HeatBins heat_bins(std::span<const double> actual, std::span<const double> estimated, std::size_t n_bins);
/// actual_lo,actual_hi,estimated_lo,estimated_hi,count
std::string heat_bins_csv(const HeatBins& bins);

struct WeeklyRow {
    TimePoint hour;
    double actual = 0.0;
    double model = 0.0;
    double svf = 0.0;
};

inline constexpr int kWeeklyHours = 148;

/// Hourly series for one station starting at `start`. The model column is
/// the mean of draws from rng.child(i), where i indexes `samples`, so it
/// matches evaluate(model, samples, rng). Throws DataError listing the hours
/// missing from the window.
std::vector<WeeklyRow> weekly_series(const TrainedModel& model, std::span<const SequenceSample> samples,
                                     const std::string& station, TimePoint start, const FactorTable& table,
                                     const RngStream& rng, int hours = kWeeklyHours,
                                     std::size_t draws = kPosteriorDraws,
                                     SvfVolumeMode mode = SvfVolumeMode::aawct_on_weekdays);
/// hour_utc,actual,model,svf
std::string weekly_csv(std::span<const WeeklyRow> rows);

}  // namespace bikeflow
