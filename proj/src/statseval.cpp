#include "psi/statseval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

#include "psi/error.hpp"
#include "psi/svg.hpp"

namespace psi {

namespace {

void require_finite(const ScorePopulation& p, const char* op) {
    if (p.values.empty()) throw DataError(std::string(op) + ": population '" + p.name + "' is empty");
    for (double x : p.values)
        if (!std::isfinite(x)) throw DataError(std::string(op) + ": population '" + p.name + "' has non-finite values");
}

}  // namespace

double auroc(const ScorePopulation& pos, const ScorePopulation& neg) {
    require_finite(pos, "auroc");
    require_finite(neg, "auroc");
    std::vector<double> n = neg.values;
    std::sort(n.begin(), n.end());
    // Twice the Mann-Whitney U, an exact integer.
    std::uint64_t twice_u = 0;
    for (double p : pos.values) {
        const auto lo = std::lower_bound(n.begin(), n.end(), p);
        const auto hi = std::upper_bound(lo, n.end(), p);
        twice_u += 2 * static_cast<std::uint64_t>(lo - n.begin()) + static_cast<std::uint64_t>(hi - lo);
    }
    const double pairs = static_cast<double>(pos.values.size()) * static_cast<double>(n.size());
    return static_cast<double>(twice_u) / (2.0 * pairs);
}

double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        // Small-lambda form: 1 - sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
        const double w = -M_PI * M_PI / (8.0 * lambda * lambda);
        double s = 0.0;
        for (int k = 1; k <= 12; ++k) {
            const double j = 2.0 * k - 1.0;
            s += std::exp(j * j * w);
        }
        return std::clamp(1.0 - std::sqrt(2.0 * M_PI) / lambda * s, 0.0, 1.0);
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        s += (k % 2 == 1 ? term : -term);
        if (term < 1e-300) break;
    }
    return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult ks_two_sample(const ScorePopulation& a, const ScorePopulation& b) {
    require_finite(a, "ks");
    require_finite(b, "ks");
    if (a.values.size() < 2 || b.values.size() < 2) throw DataError("ks: each sample needs at least 2 values");
    std::vector<double> x = a.values, y = b.values;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double t = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == t) ++i;
        while (j < y.size() && y[j] == t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    const double ne = nx * ny / (nx + ny);
    return {d, kolmogorov_survival(std::sqrt(ne) * d)};
}

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DataError("spearman: length mismatch");
    if (a.size() < 3) throw DataError("spearman: need at least 3 pairs");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw DataError("rank correlation undefined");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

TTestResult paired_ttest(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DataError("paired t-test: length mismatch");
    if (x.size() < 2) throw DataError("paired t-test: need at least 2 pairs");
    const std::size_t n = x.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - y[i];
    if (std::all_of(d.begin(), d.end(), [&](double v) { return v == d[0]; })) throw DataError("degenerate pairs");
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) throw DataError("degenerate pairs");
    const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
    const boost::math::students_t dist(static_cast<double>(n - 1));
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    return {t, std::min(1.0, p), n - 1};
}

double student_t_quantile(double prob, std::size_t dof) {
    if (dof < 1) throw DataError("t quantile: dof must be >= 1");
    return boost::math::quantile(boost::math::students_t(static_cast<double>(dof)), prob);
}

KHatHistogram khat_histogram(std::span<const ChannelScore> scores) {
    KHatHistogram h;
    for (std::size_t k = 2; k <= 5; ++k) h.counts[k] = 0;
    for (const auto& s : scores) ++h.counts[s.k_hat];
    h.empty = scores.empty();
    return h;
}

std::vector<RocPoint> roc_curve(const ScorePopulation& pos, const ScorePopulation& neg) {
    require_finite(pos, "roc");
    require_finite(neg, "roc");
    std::vector<std::pair<double, bool>> all;
    for (double v : pos.values) all.emplace_back(v, true);
    for (double v : neg.values) all.emplace_back(v, false);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    const double np = static_cast<double>(pos.values.size()), nn = static_cast<double>(neg.values.size());
    std::vector<RocPoint> pts{{0.0, 0.0, std::numeric_limits<double>::infinity()}};
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < all.size();) {
        const double t = all[i].first;
        for (; i < all.size() && all[i].first == t; ++i) (all[i].second ? tp : fp)++;
        pts.push_back({static_cast<double>(fp) / nn, static_cast<double>(tp) / np, t});
    }
    return pts;
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw DataError("quantile of empty sample");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string format_number(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

using Field = double ChannelScore::*;
struct NamedField {
    const char* name;
    Field field;
};
constexpr NamedField kScoreFields[] = {
    {"psi", &ChannelScore::psi},     {"log_psi", &ChannelScore::log_psi}, {"cal_s", &ChannelScore::cal_s},
    {"cal_q", &ChannelScore::cal_q}, {"cal_d", &ChannelScore::cal_d},     {"raw_s", &ChannelScore::raw_s},
    {"raw_q", &ChannelScore::raw_q}, {"raw_d", &ChannelScore::raw_d},
};

ScorePopulation extract(const std::string& name, const std::vector<ChannelScore>& scores, Field f) {
    ScorePopulation p{name, {}};
    p.values.reserve(scores.size());
    for (const auto& s : scores) p.values.push_back(s.*f);
    return p;
}

nlohmann::ordered_json summarize(const std::string& name, const std::vector<ChannelScore>& scores) {
    nlohmann::ordered_json j;
    j["name"] = name;
    j["n"] = scores.size();
    for (const auto& nf : kScoreFields) {
        const auto v = extract(name, scores, nf.field).values;
        j[nf.name] = {{"min", quantile(v, 0.0)}, {"q25", quantile(v, 0.25)}, {"median", quantile(v, 0.5)},
                      {"q75", quantile(v, 0.75)}, {"max", quantile(v, 1.0)}};
    }
    std::size_t no_structure = 0;
    for (const auto& s : scores) no_structure += s.no_positive_structure ? 1 : 0;
    j["no_positive_structure"] = no_structure;
    nlohmann::ordered_json hist;
    for (const auto& [k, c] : khat_histogram(scores).counts) hist[std::to_string(k)] = c;
    j["khat_histogram"] = hist;
    return j;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& header) : out_(path, std::ios::trunc) {
        if (!out_) throw DataError("cannot write " + path.string());
        out_ << header << '\n';
    }
    template <typename... Cols>
    void row(const Cols&... cols) {
        bool first = true;
        ((out_ << (first ? "" : ",") << cell(cols), first = false), ...);
        out_ << '\n';
    }

private:
    static std::string cell(double x) { return format_number(x); }
    static std::string cell(std::size_t x) { return std::to_string(x); }
    static const std::string& cell(const std::string& s) { return s; }
    std::ofstream out_;
};

struct Bins {
    double lo, width;
    std::size_t n;
    double edge(std::size_t i) const { return lo + width * static_cast<double>(i); }
    std::vector<std::size_t> count(const std::vector<double>& v) const {
        std::vector<std::size_t> c(n, 0);
        for (double x : v) {
            auto b = static_cast<std::ptrdiff_t>(std::floor((x - lo) / width));
            c[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(n) - 1))]++;
        }
        return c;
    }
};

Bins common_bins(const std::vector<std::vector<double>>& samples, std::size_t n) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : samples)
        for (double x : s) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    if (!(hi > lo)) {
        lo -= 0.5;
        hi += 0.5;
    }
    return {lo, (hi - lo) / static_cast<double>(n), n};
}

constexpr double kViolinQuantiles[] = {0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 1.0};

}  // namespace

nlohmann::ordered_json emit_report(const ReportInputs& in, const std::filesystem::path& out_dir) {
    if (in.positive.empty()) throw DataError("report: positive population '" + in.positive_name + "' is empty");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) throw DataError("report: cannot create " + out_dir.string());

    nlohmann::ordered_json report;
    report["populations"] = nlohmann::ordered_json::array();
    report["populations"].push_back(summarize(in.positive_name, in.positive));
    if (!in.negative.empty()) report["populations"].push_back(summarize(in.negative_name, in.negative));
    if (!in.compare.empty()) report["populations"].push_back(summarize(in.compare_name, in.compare));

    std::vector<std::pair<std::string, const std::vector<ChannelScore>*>> pops{{in.positive_name, &in.positive}};
    if (!in.negative.empty()) pops.emplace_back(in.negative_name, &in.negative);
    if (!in.compare.empty()) pops.emplace_back(in.compare_name, &in.compare);

    if (!in.negative.empty()) {
        nlohmann::ordered_json a;
        for (const auto& nf : kScoreFields)
            a[nf.name] = auroc(extract(in.positive_name, in.positive, nf.field),
                               extract(in.negative_name, in.negative, nf.field));
        report["auroc_vs_" + in.negative_name] = a;

        const auto roc = roc_curve(extract(in.positive_name, in.positive, &ChannelScore::psi),
                                   extract(in.negative_name, in.negative, &ChannelScore::psi));
        CsvWriter csv(out_dir / "roc_psi.csv", "fpr,tpr,threshold");
        std::vector<std::pair<double, double>> line;
        for (const auto& p : roc) {
            csv.row(p.fpr, p.tpr, p.threshold);
            line.emplace_back(p.fpr, p.tpr);
        }
        svg::write_line_plot(out_dir / "roc_psi.svg", "ROC: PSI " + in.positive_name + " vs " + in.negative_name,
                             "false positive rate", "true positive rate", line, true);
    }

    if (!in.compare.empty()) {
        const auto ks = ks_two_sample(extract(in.positive_name, in.positive, &ChannelScore::psi),
                                      extract(in.compare_name, in.compare, &ChannelScore::psi));
        report["ks_psi_" + in.positive_name + "_vs_" + in.compare_name] = {{"statistic", ks.statistic},
                                                                          {"p_value", ks.p_value}};
    }

    if (!in.rerun.empty()) {
        std::unordered_map<std::int64_t, double> rerun;
        for (const auto& s : in.rerun) rerun[s.channel] = s.psi;
        std::vector<double> a, b;
        for (const auto& s : in.positive)
            if (auto it = rerun.find(s.channel); it != rerun.end()) {
                a.push_back(s.psi);
                b.push_back(it->second);
            }
        nlohmann::ordered_json sp{{"n_joined", a.size()}};
        try {
            sp["rho"] = spearman_rho(a, b);
        } catch (const DataError& e) {
            sp["rho"] = nullptr;
            sp["error"] = e.what();
        }
        report["spearman_psi_rerun"] = sp;
    }

    // ln PSI histogram over shared bins.
    {
        std::vector<std::vector<double>> samples;
        for (const auto& [name, scores] : pops) samples.push_back(extract(name, *scores, &ChannelScore::log_psi).values);
        const Bins bins = common_bins(samples, 30);
        std::vector<svg::Series> series;
        for (std::size_t p = 0; p < pops.size(); ++p) {
            const auto counts = bins.count(samples[p]);
            CsvWriter csv(out_dir / ("hist_log_psi_" + pops[p].first + ".csv"), "bin_lo,bin_hi,count");
            svg::Series s{pops[p].first, {}};
            for (std::size_t i = 0; i < bins.n; ++i) {
                csv.row(bins.edge(i), bins.edge(i + 1), counts[i]);
                s.points.emplace_back(bins.edge(i), static_cast<double>(counts[i]));
            }
            series.push_back(std::move(s));
        }
        svg::write_histogram(out_dir / "hist_log_psi.svg", "ln PSI", "ln PSI", "channels", series, bins.width);
        report["log_psi_histogram"] = {{"bins", bins.n}, {"lo", bins.lo}, {"width", bins.width}};
    }

    // K-hat histogram of the positive population.
    {
        const auto h = khat_histogram(in.positive);
        CsvWriter csv(out_dir / "khat_histogram.csv", "bin_lo,bin_hi,count");
        svg::Series s{in.positive_name, {}};
        for (const auto& [k, c] : h.counts) {
            csv.row(static_cast<double>(k), static_cast<double>(k + 1), c);
            s.points.emplace_back(static_cast<double>(k) - 0.4, static_cast<double>(c));
        }
        svg::write_histogram(out_dir / "khat_histogram.svg", "selected cluster count", "K-hat", "channels", {s}, 0.8);
    }

    // Violin data: PSI quantiles per population.
    {
        CsvWriter csv(out_dir / "violin_psi.csv", "population,quantile,value");
        std::vector<svg::Box> boxes;
        for (const auto& [name, scores] : pops) {
            const auto v = extract(name, *scores, &ChannelScore::psi).values;
            for (double q : kViolinQuantiles) csv.row(name, q, quantile(v, q));
            boxes.push_back({name, quantile(v, 0.05), quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75),
                             quantile(v, 0.95)});
        }
        svg::write_box_plot(out_dir / "violin_psi.svg", "PSI by population", "PSI", boxes);
    }

    std::ofstream out(out_dir / "report.json", std::ios::trunc);
    if (!out) throw DataError("cannot write " + (out_dir / "report.json").string());
    out << report.dump(2) << '\n';
    return report;
}

}  // namespace psi
