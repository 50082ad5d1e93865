#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "psi/calibration.hpp"

namespace psi {

struct ScorePopulation {
    std::string name;
    std::vector<double> values;
};

// Mann-Whitney form: P(pos > neg) + 0.5 P(pos == neg).
double auroc(const ScorePopulation& pos, const ScorePopulation& neg);

struct KsResult {
    double statistic;
    double p_value;
};
KsResult ks_two_sample(const ScorePopulation& a, const ScorePopulation& b);

// Asymptotic Kolmogorov survival function P(K > lambda).
double kolmogorov_survival(double lambda);

double spearman_rho(std::span<const double> a, std::span<const double> b);

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

struct TTestResult {
    double t;
    double p_value;  // two-sided
    std::size_t dof;
};
TTestResult paired_ttest(std::span<const double> x, std::span<const double> y);

// Two-sided Student-t quantile helper used for confidence intervals.
double student_t_quantile(double prob, std::size_t dof);

struct KHatHistogram {
    std::map<std::size_t, std::size_t> counts;  // always has keys 2..5
    bool empty = false;
};
KHatHistogram khat_histogram(std::span<const ChannelScore> scores);

struct RocPoint {
    double fpr;
    double tpr;
    double threshold;  // +inf for the origin point
};
std::vector<RocPoint> roc_curve(const ScorePopulation& pos, const ScorePopulation& neg);

// Linear-interpolated quantile (type 7) of an unsorted sample.
double quantile(std::vector<double> v, double q);

struct ReportInputs {
    std::string positive_name = "real";
    std::vector<ChannelScore> positive;
    std::string negative_name = "null";
    std::vector<ChannelScore> negative;  // optional: AUROC + ROC
    std::string compare_name = "compare";
    std::vector<ChannelScore> compare;  // optional: KS depth comparison
    std::vector<ChannelScore> rerun;    // optional: Spearman robustness, joined on channel
};

// Writes report.json, CSV plot data and SVG renderings into out_dir. Returns
// the report document. Output bytes are a deterministic function of inputs.
nlohmann::ordered_json emit_report(const ReportInputs& in, const std::filesystem::path& out_dir);

// Shared CSV/SVG number formatting (%.17g; "inf"/"-inf" for infinities).
std::string format_number(double x);

}  // namespace psi
