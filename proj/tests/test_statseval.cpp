#include <doctest.h>

#include <cmath>
#include <sstream>

#include "psi/error.hpp"
#include "psi/random.hpp"
#include "psi/statseval.hpp"
#include "test_util.hpp"

using namespace psi;
using testutil::TempDir;

namespace {

ChannelScore score(std::int64_t ch, double psi, std::size_t k_hat = 2) {
    ChannelScore s;
    s.channel = ch;
    s.psi = psi;
    s.log_psi = std::log(psi);
    s.cal_s = s.cal_q = s.cal_d = std::cbrt(psi);
    s.k_hat = k_hat;
    return s;
}

}  // namespace

TEST_SUITE("statseval") {

TEST_CASE("auroc examples") {
    CHECK(auroc({"p", {3, 4, 5}}, {"n", {0, 1, 2}}) == 1.0);
    CHECK(auroc({"p", {1, 2, 2, 3}}, {"n", {3, 2, 1, 2}}) == 0.5);
    CHECK(auroc({"p", {0.9, 0.4}}, {"n", {0.5, 0.1}}) == 0.75);
    CHECK_THROWS_AS(auroc({"p", {}}, {"n", {1}}), DataError);
}

TEST_CASE("auroc oracle and exact symmetry") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a(1 + rng.below(15)), b(1 + rng.below(15));
        for (auto& x : a) x = static_cast<double>(rng.below(6)) / 5.0;  // plenty of ties
        for (auto& x : b) x = static_cast<double>(rng.below(6)) / 5.0;
        CHECK(std::fabs(auroc({"a", a}, {"b", b}) - oracle::auroc(a, b)) < 1e-12);
        CHECK(auroc({"a", a}, {"b", b}) + auroc({"b", b}, {"a", a}) == 1.0);
    }
}

TEST_CASE("ks examples") {
    const auto same = ks_two_sample({"a", {1, 2, 3, 4}}, {"b", {1, 2, 3, 4}});
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);
    CHECK(ks_two_sample({"a", {0, 1}}, {"b", {2, 3}}).statistic == 1.0);
    CHECK_THROWS_AS(ks_two_sample({"a", {1}}, {"b", {2, 3}}), DataError);
}

TEST_CASE("ks statistic against brute-force ECDF sweep") {
    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a(2 + rng.below(20)), b(2 + rng.below(20));
        for (auto& x : a) x = static_cast<double>(rng.below(10));
        for (auto& x : b) x = static_cast<double>(rng.below(10));
        double d = 0;
        for (double v = -1; v <= 10; v += 0.5) {
            double fa = 0, fb = 0;
            for (double x : a) fa += x <= v;
            for (double x : b) fb += x <= v;
            d = std::max(d, std::fabs(fa / a.size() - fb / b.size()));
        }
        CHECK(ks_two_sample({"a", a}, {"b", b}).statistic == doctest::Approx(d).epsilon(1e-15));
    }
}

TEST_CASE("kolmogorov survival: branches agree and known values") {
    // both series are valid near the switch point
    const double lam = 1.18;
    double s_large = 0;
    for (int k = 1; k <= 100; ++k) s_large += (k % 2 ? 1 : -1) * std::exp(-2.0 * k * k * lam * lam);
    CHECK(kolmogorov_survival(lam) == doctest::Approx(2 * s_large).epsilon(1e-12));
    CHECK(kolmogorov_survival(1.1799999) == doctest::Approx(2 * s_large).epsilon(1e-6));
    CHECK(kolmogorov_survival(1.3580986) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(kolmogorov_survival(0.0) == 1.0);
    CHECK(kolmogorov_survival(0.2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("shifted populations give tiny KS p") {
    Rng rng(3);
    std::vector<double> a(500), b(500);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal() + 1.0;
    CHECK(ks_two_sample({"a", a}, {"b", b}).p_value < 1e-6);
}

TEST_CASE("spearman examples and oracle") {
    const std::vector<double> a{1, 2, 3, 4}, r{4, 3, 2, 1}, b{1, 3, 2, 4};
    CHECK(spearman_rho(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(spearman_rho(a, r) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(std::fabs(spearman_rho(a, b) - oracle::spearman(a, b)) < 1e-12);
    CHECK(spearman_rho(a, b) == doctest::Approx(0.8));
    CHECK_THROWS_WITH_AS(spearman_rho(a, std::vector<double>{2, 2, 2, 2}), "rank correlation undefined", DataError);
    Rng rng(4);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(3 + rng.below(20)), y;
        for (auto& v : x) v = static_cast<double>(rng.below(5));
        for (double v : x) y.push_back(v + static_cast<double>(rng.below(4)));
        if (oracle::ranks(x) == std::vector<double>(x.size(), oracle::ranks(x)[0])) continue;
        if (oracle::ranks(y) == std::vector<double>(y.size(), oracle::ranks(y)[0])) continue;
        CHECK(std::fabs(spearman_rho(x, y) - oracle::spearman(x, y)) < 1e-12);
    }
}

TEST_CASE("average ranks") {
    CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
}

TEST_CASE("paired t-test") {
    const std::vector<double> x{1, 2, 3};
    CHECK_THROWS_WITH_AS(paired_ttest(x, x), "degenerate pairs", DataError);
    const std::vector<double> d{0.2, 0.1, 0.15}, z{0, 0, 0};
    const auto r = paired_ttest(d, z);
    const auto o = oracle::paired_t(d, z);
    CHECK(std::fabs(r.t - o.t) < 1e-12);
    CHECK(std::fabs(r.p_value - o.p) < 1e-9);
    CHECK(r.t == doctest::Approx(5.196152422706632));
    CHECK(r.dof == 2);

    Rng rng(5);
    std::vector<double> eff(10), zero(10, 0.0);
    for (auto& v : eff) v = 0.15 + 0.05 * rng.normal();
    CHECK(paired_ttest(eff, zero).p_value < 0.05);
}

TEST_CASE("t quantile") {
    CHECK(student_t_quantile(0.975, 9) == doctest::Approx(2.262157162740992).epsilon(1e-10));
    CHECK(student_t_quantile(0.975, 1000000) == doctest::Approx(1.959966).epsilon(1e-5));
}

TEST_CASE("khat histogram") {
    std::vector<ChannelScore> all2(4, score(0, 0.5, 2));
    auto h = khat_histogram(all2);
    CHECK(h.counts == std::map<std::size_t, std::size_t>{{2, 4}, {3, 0}, {4, 0}, {5, 0}});
    CHECK_FALSE(h.empty);
    std::vector<ChannelScore> mixed = {score(0, .5, 2), score(1, .5, 3), score(2, .5, 3), score(3, .5, 5)};
    CHECK(khat_histogram(mixed).counts == std::map<std::size_t, std::size_t>{{2, 1}, {3, 2}, {4, 0}, {5, 1}});
    const auto e = khat_histogram({});
    CHECK(e.empty);
    CHECK(e.counts.size() == 4);
}

TEST_CASE("roc curve monotone, ends at (1,1)") {
    Rng rng(6);
    ScorePopulation p{"p", {}}, n{"n", {}};
    for (int i = 0; i < 40; ++i) {
        p.values.push_back(rng.normal() + 1);
        n.values.push_back(rng.normal());
    }
    n.values.push_back(p.values[0]);  // a tie
    const auto roc = roc_curve(p, n);
    CHECK(roc.front().fpr == 0.0);
    CHECK(roc.front().tpr == 0.0);
    CHECK(roc.back().fpr == 1.0);
    CHECK(roc.back().tpr == 1.0);
    double area = 0;
    for (std::size_t i = 1; i < roc.size(); ++i) {
        CHECK(roc[i].fpr >= roc[i - 1].fpr);
        CHECK(roc[i].tpr >= roc[i - 1].tpr);
        area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2;
    }
    CHECK(area == doctest::Approx(auroc(p, n)).epsilon(1e-12));
}

TEST_CASE("quantile type 7") {
    CHECK(quantile({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile({5, 1, 3}, 0.0) == 1.0);
    CHECK(quantile({5, 1, 3}, 1.0) == 5.0);
    CHECK(quantile({1, 2, 3, 4, 5}, 0.25) == 2.0);
}

TEST_CASE("report bundle is deterministic") {
    Rng rng(7);
    ReportInputs in;
    for (std::int64_t c = 0; c < 30; ++c) {
        in.positive.push_back(score(c, 0.3 + 0.6 * rng.uniform(), 2 + rng.below(4)));
        in.negative.push_back(score(c, 0.05 + 0.2 * rng.uniform()));
        in.compare.push_back(score(c, 0.1 + 0.5 * rng.uniform()));
        in.rerun.push_back(score(c, in.positive.back().psi + 0.01 * rng.uniform()));
    }
    TempDir a, b;
    const auto ja = emit_report(in, a.path());
    emit_report(in, b.path());
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(a.path())) {
        ++files;
        CHECK(testutil::slurp(e.path()) == testutil::slurp(b.path() / e.path().filename()));
    }
    CHECK(files >= 10);
    CHECK(ja.contains("auroc_vs_null"));
    CHECK(ja["auroc_vs_null"]["psi"].get<double>() == 1.0);
    CHECK(std::filesystem::exists(a.path() / "roc_psi.csv"));

    std::istringstream roc(testutil::slurp(a.path() / "roc_psi.csv"));
    std::string line;
    std::getline(roc, line);
    CHECK(line == "fpr,tpr,threshold");
    double prev = -1;
    while (std::getline(roc, line)) {
        const double fpr = std::stod(line.substr(0, line.find(',')));
        CHECK(fpr >= prev);
        prev = fpr;
    }
}

TEST_CASE("report needs a positive population") {
    TempDir a;
    CHECK_THROWS_AS(emit_report(ReportInputs{}, a.path()), DataError);
}

}
