#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gradcheck.hpp"
#include "rclstm/baselines.hpp"
#include "rclstm/synthetic.hpp"

using namespace rclstm;

namespace {

// Least squares by modified Gram-Schmidt QR on the explicit design matrix;
// shares nothing with the library's normal-equation solver.
Vector qr_least_squares(const std::vector<Vector>& cols, const Vector& y)
{
    const std::size_t n = cols.size();
    std::vector<Vector> q = cols;
    std::vector<Vector> r(n, Vector(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < j; ++i) {
            double d = 0.0;
            for (std::size_t k = 0; k < y.size(); ++k) d += q[i][k] * q[j][k];
            r[i][j] = d;
            for (std::size_t k = 0; k < y.size(); ++k) q[j][k] -= d * q[i][k];
        }
        double nrm = 0.0;
        for (double v : q[j]) nrm += v * v;
        r[j][j] = std::sqrt(nrm);
        for (double& v : q[j]) v /= r[j][j];
    }
    Vector qty(n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < y.size(); ++k) qty[j] += q[j][k] * y[k];
    Vector beta(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = qty[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= r[i][j] * beta[j];
        beta[i] = s / r[i][i];
    }
    return beta;
}

struct Design {
    std::vector<Vector> cols;
    Vector y;
};

Design ar_design(const Vector& w, std::size_t p)
{
    Design d{std::vector<Vector>(p + 1), {}};
    for (std::size_t t = p; t < w.size(); ++t) {
        d.cols[0].push_back(1.0);
        for (std::size_t j = 1; j <= p; ++j) d.cols[j].push_back(w[t - j]);
        d.y.push_back(w[t]);
    }
    return d;
}

}  // namespace

TEST(Naive, Cases)
{
    EXPECT_EQ(naive_forecast(Vector{5}), 5.0);
    EXPECT_EQ(naive_forecast(Vector{1, 2}), 2.0);
    EXPECT_THROW(naive_forecast(Vector{}), DomainError);
    auto ds = sliding_window(Vector(20, 0.7), 4);
    EXPECT_EQ(rmse(ds.targets, naive_predictions(ds)), 0.0);
}

TEST(Arima, RecoversAr5OnDifferences)
{
    const auto& truth = synthetic::default_ar5_coefficients();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto s = synthetic::ar_on_differences(5000, truth, 0.0, 1.0, seed);
        auto m = arima_fit(s, 5, 1);
        EXPECT_FALSE(m.regularized);
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(m.coefficients[j], truth[j], 0.05) << "seed " << seed << " lag " << j + 1;
    }
}

TEST(Arima, MatchesIndependentQrSolution)
{
    const auto s = synthetic::ar_on_differences(800, synthetic::default_ar5_coefficients(), 0.3, 2.0, 9);
    auto m = arima_fit(s, 5, 1);
    const auto d = ar_design(difference(s, 1), 5);
    const auto beta = qr_least_squares(d.cols, d.y);
    EXPECT_NEAR(m.intercept, beta[0], 1e-9);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(m.coefficients[j], beta[j + 1], 1e-9);
}

TEST(Arima, SatisfiesNormalEquations)
{
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        Vector s(300);
        double x = 0.0;
        for (auto& v : s) v = (x += rng.normal());
        const std::size_t p = 1 + rng.index(6), dd = rng.index(3);
        auto m = arima_fit(s, p, dd);
        const auto d = ar_design(difference(s, dd), p);
        Vector beta{m.intercept};
        beta.insert(beta.end(), m.coefficients.begin(), m.coefficients.end());
        for (std::size_t a = 0; a <= p; ++a) {
            double g = 0.0, scale = 0.0;
            for (std::size_t k = 0; k < d.y.size(); ++k) {
                double fit = 0.0;
                for (std::size_t b = 0; b <= p; ++b) fit += d.cols[b][k] * beta[b];
                g += d.cols[a][k] * (d.y[k] - fit);
                scale += std::abs(d.cols[a][k] * d.y[k]);
            }
            EXPECT_LT(std::abs(g), 1e-8 * std::max(scale, 1.0)) << "p=" << p << " d=" << dd;
        }
    }
}

TEST(Arima, LinearTrendContinuesExactly)
{
    Vector s(200);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = 3.0 + 0.25 * static_cast<double>(k);
    std::ostringstream warn;
    auto m = arima_fit(s, 5, 1, &warn);
    EXPECT_TRUE(m.regularized);
    EXPECT_NE(warn.str().find("ridge"), std::string::npos);
    for (std::size_t end : {10u, 57u, 200u}) {
        std::span<const double> hist(s.data(), end);
        EXPECT_NEAR(arima_forecast(m, hist), 3.0 + 0.25 * static_cast<double>(end), 1e-9);
    }
}

TEST(Arima, ConstantSeriesForecastsConstant)
{
    const Vector s(50, 4.5);
    auto m = arima_fit(s, 5, 1, nullptr);
    EXPECT_NEAR(arima_forecast(m, s), 4.5, 1e-12);
}

TEST(Arima, RandomWalkDegenerateModelIsLastValue)
{
    ArimaModel m{1, 1, 0, {0.0}, 0.0, false};
    EXPECT_EQ(arima_forecast(m, Vector{1.0, 4.0, 2.5}), 2.5);
}

TEST(Arima, Errors)
{
    EXPECT_THROW(arima_fit(Vector{1, 2, 3, 4, 5, 6, 7}, 5, 1), DataError);
    EXPECT_THROW(arima_fit(Vector(20, 1.0), 0, 1), DomainError);
    ArimaModel m{5, 1, 0, Vector(5, 0.1), 0.0, false};
    EXPECT_THROW(arima_forecast(m, Vector{1, 2, 3, 4, 5}), DataError);
}

TEST(Arima, SecondOrderDifferencingIntegratesTwice)
{
    Vector s(100);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = 0.5 * static_cast<double>(k * k);
    auto m = arima_fit(s, 2, 2, nullptr);
    EXPECT_NEAR(arima_forecast(m, s), 0.5 * 100.0 * 100.0, 1e-6);
}

TEST(Ffnn, ZeroWeightsPredictFinalBias)
{
    auto f = make_ffnn({6, 5, 4, 1}, 1);
    for (auto& l : f.layers) {
        l.w.fill(0.0);
        std::fill(l.b.begin(), l.b.end(), 0.0);
    }
    f.layers.back().b[0] = -0.42;
    EXPECT_EQ(ffnn_predict(f, Vector(6, 3.0)), -0.42);
    EXPECT_EQ(f.dims(), (std::vector<std::size_t>{6, 5, 4, 1}));
    EXPECT_THROW(ffnn_predict(f, Vector(5, 0.0)), ShapeError);
    EXPECT_THROW(make_ffnn({4, 3}, 1), ShapeError);
}

TEST(Ffnn, GradientMatchesFiniteDifferences)
{
    auto f = make_ffnn({7, 5, 4, 1}, 2);
    Rng rng(3);
    for (auto& l : f.layers)
        for (auto& b : l.b) b = rng.uniform(-0.3, 0.3);
    Vector x(7);
    for (auto& v : x) v = rng.uniform(-1, 1);
    const double target = 0.2;
    FfnnTrace tr;
    const auto l = mse_loss(ffnn_forward(f, x, tr), target);
    auto grads = ffnn_zero_grads(f);
    ffnn_backward_accumulate(f, tr, l.grad, grads);
    std::vector<std::span<double>> analytic;
    for (auto& g : grads) {
        analytic.emplace_back(g.w.values());
        analytic.emplace_back(g.b);
    }
    auto rep = gradcheck::check(
        parameter_spans(f), analytic, [&] { return mse_loss(ffnn_predict(f, x), target).loss; }, [] {},
        [](std::size_t, std::size_t) { return true; });
    EXPECT_LT(rep.max_relative_error, 1e-5) << rep.worst;
}

TEST(Ffnn, BeatsNaiveOnSine)
{
    auto ds = sliding_window(synthetic::sine(400, 25.0), 20);
    auto split = chronological_split(ds, 0.8);
    auto f = make_ffnn({20, 50, 50, 1}, 4);
    TrainingConfig cfg;
    cfg.epochs = 60;
    ffnn_train(f, split.train, cfg);
    const double ffnn = rmse(split.test.targets, ffnn_predictions(f, split.test));
    const double naive = rmse(split.test.targets, naive_predictions(split.test));
    EXPECT_LT(ffnn, naive);
}

TEST(Ffnn, TrainingIsDeterministic)
{
    auto ds = sliding_window(synthetic::sine(120, 10.0, 0.05, 2), 10);
    TrainingConfig cfg;
    cfg.epochs = 3;
    auto a = make_ffnn({10, 8, 1}, 5), b = make_ffnn({10, 8, 1}, 5);
    EXPECT_EQ(ffnn_train(a, ds, cfg).train_loss, ffnn_train(b, ds, cfg).train_loss);
    EXPECT_EQ(a.layers[0].w, b.layers[0].w);
}

TEST(Baselines, WhiteNoiseHasNoSkillBeyondSlack)
{
    Rng rng(6);
    Vector s(1500);
    for (auto& v : s) v = 0.5 + 0.1 * rng.normal();
    auto ds = sliding_window(s, 20);
    auto split = chronological_split(ds, 0.8);
    double mean = 0.0, var = 0.0;
    for (double v : split.test.targets) mean += v;
    mean /= static_cast<double>(split.test.size());
    for (double v : split.test.targets) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(split.test.size()));

    auto am = arima_fit(series_from_windows(split.train), 5, 1);
    auto f = make_ffnn({20, 50, 50, 1}, 7);
    TrainingConfig cfg;
    cfg.epochs = 10;
    ffnn_train(f, split.train, cfg);
    for (double r : {rmse(split.test.targets, arima_predictions(am, split.test)),
                     rmse(split.test.targets, naive_predictions(split.test)),
                     rmse(split.test.targets, ffnn_predictions(f, split.test))})
        EXPECT_GT(r, 0.8 * sd);
}

TEST(Synthetic, LongRangeIsLevelPlusNoise)
{
    EXPECT_EQ(synthetic::long_range(500, 4), synthetic::long_range(500, 4));
    EXPECT_NE(synthetic::long_range(500, 4), synthetic::long_range(500, 5));
    // with both noise sources off only the regime level remains
    synthetic::LongRangeParams quiet;
    quiet.innovation_sd = 0.0;
    quiet.noise_sd = 0.0;
    EXPECT_EQ(synthetic::long_range(300, 7, quiet), synthetic::regime_switching(300, 7, quiet.switch_prob, 0.0, 2));
}

TEST(Synthetic, ParseKind)
{
    EXPECT_EQ(synthetic::parse_kind("long_range"), synthetic::Kind::long_range);
    EXPECT_EQ(synthetic::parse_kind("regime"), synthetic::Kind::regime);
    EXPECT_THROW(synthetic::parse_kind("square"), DomainError);
    EXPECT_EQ(synthetic::generate(synthetic::Kind::long_range, 64, 3), synthetic::long_range(64, 3));
}
