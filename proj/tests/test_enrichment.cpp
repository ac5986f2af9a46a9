#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "spdseq/enrichment.hpp"
#include "testing_util.hpp"

using namespace spdseq;
using testing::random_gaussian;
using testing::random_spd;
using testing::rel_frobenius;

namespace {

EnrichmentConfig config(WhiteningStrategy s, FeatureSource f = FeatureSource::AVG_PSD,
                        double alpha = 1.0, int k = 1) {
    EnrichmentConfig cfg;
    cfg.strategy = s;
    cfg.feature_source = f;
    cfg.alpha = alpha;
    cfg.k = k;
    return cfg;
}

// A small cluster of covariance-like matrices with feature columns.
void make_channel(Rng& rng, int n, int count, std::vector<SpdMatrix>& xs,
                  std::vector<Eigen::MatrixXd>& as) {
    const SpdMatrix base = random_spd(rng, n, 10.0);
    for (int i = 0; i < count; ++i) {
        const Eigen::MatrixXd jitter = 0.15 * random_gaussian(rng, n, n);
        xs.emplace_back(base.mat() + jitter * jitter.transpose());
        as.push_back(0.5 * random_gaussian(rng, n, 1).cwiseAbs());
    }
}

} // namespace

TEST_CASE("augment with zero features embeds the identity block") {
    const Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 1);
    const SpdMatrix out = augment(SpdMatrix::identity(2), a, 3.7);
    CHECK(rel_frobenius(out.mat(), Eigen::MatrixXd::Identity(3, 3)) < 1e-15);
}

TEST_CASE("augment block layout, hand-assembled case") {
    // X = diag(2,2), A = (1,1)^T, alpha = 1:
    //   [ 3 1 | 1 ]
    //   [ 1 3 | 1 ]
    //   [ 1 1 | 1 ]
    // Leading principal minors 3, 8, 4 are positive (Sylvester), so the
    // assembled matrix is SPD.
    Eigen::MatrixXd x = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd a(2, 1);
    a << 1, 1;
    const SpdMatrix out = augment(SpdMatrix(x), a, 1.0);
    Eigen::MatrixXd expected(3, 3);
    expected << 3, 1, 1, 1, 3, 1, 1, 1, 1;
    CHECK(rel_frobenius(out.mat(), expected) < 1e-15);

    const double m1 = expected(0, 0);
    const double m2 = expected.topLeftCorner(2, 2).determinant();
    const double m3 = expected.determinant();
    CHECK(m1 > 0);
    CHECK(m2 == doctest::Approx(8.0));
    CHECK(m3 == doctest::Approx(4.0));
}

TEST_CASE("augment substitution identity: alpha folds into A") {
    Rng rng(1);
    const SpdMatrix x = random_spd(rng, 4);
    const Eigen::MatrixXd a = random_gaussian(rng, 4, 2);
    const SpdMatrix lhs = augment(x, a, 2.0);
    const SpdMatrix rhs = augment(x, 2.0 * a, 1.0);
    CHECK((lhs.mat() - rhs.mat()).norm() == 0.0);
}

TEST_CASE("augment rejects misaligned features") {
    Rng rng(2);
    const SpdMatrix x = random_spd(rng, 3);
    CHECK_THROWS_AS(augment(x, Eigen::MatrixXd::Zero(4, 1), 1.0), DimensionMismatch);
}

TEST_CASE("augment preserves SPD over the property grid") {
    // The executable form of the supplementary positivity proof: 1000
    // seeded (X, A, alpha) triples, alpha across [0.01, 10].
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(5));
        const int k = 1 + static_cast<int>(rng.below(3));
        const SpdMatrix x = random_spd(rng, n, 1e3);
        const Eigen::MatrixXd a = 3.0 * random_gaussian(rng, n, k);
        const double alpha = std::exp(rng.uniform(std::log(0.01), std::log(10.0)));
        const SpdMatrix out = augment(x, a, alpha);  // construction validates SPD
        const auto eig = eig_sym(SymMatrix(out.mat()));
        CHECK(eig.eigenvalues(out.dim() - 1) > 0.0);
    }
}

TEST_CASE("whiten examples") {
    Rng rng(4);
    const SpdMatrix g = random_spd(rng, 4);
    CHECK((whiten(g, g).mat() - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-9);

    const SpdMatrix x = random_spd(rng, 4);
    CHECK(rel_frobenius(whiten(x, SpdMatrix::identity(4)).mat(), x.mat()) < 1e-12);

    Eigen::VectorXd xe(2), ge(2);
    xe << 4, 9;
    ge << 4, 1;
    const SpdMatrix w = whiten(SpdMatrix(Eigen::MatrixXd(xe.asDiagonal())),
                               SpdMatrix(Eigen::MatrixXd(ge.asDiagonal())));
    CHECK(w(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w(1, 1) == doctest::Approx(9.0).epsilon(1e-12));
    CHECK_THROWS_AS(whiten(SpdMatrix::identity(2), SpdMatrix::identity(3)),
                    DimensionMismatch);
}

TEST_CASE("EnrichmentConfig validation") {
    CHECK_THROWS_AS(config(WhiteningStrategy::MAW, FeatureSource::AVG_PSD, 1.0, 0).validate(),
                    ConfigError);
    CHECK_THROWS_AS(config(WhiteningStrategy::MAW, FeatureSource::AVG_PSD, -1.0).validate(),
                    ConfigError);
    CHECK_THROWS_AS(config(WhiteningStrategy::MAW, FeatureSource::ZEROS, 1.0, 2).validate(),
                    ConfigError);
    CHECK_NOTHROW(config(WhiteningStrategy::WPA, FeatureSource::ZEROS, 1.0, 0).validate());
}

TEST_CASE("whitening_matrix of a single element under DAW is that augmented matrix") {
    Rng rng(5);
    const SpdMatrix x = random_spd(rng, 3);
    const Eigen::MatrixXd a = random_gaussian(rng, 3, 1);
    const SpdMatrix g = whitening_matrix({x}, {a}, config(WhiteningStrategy::DAW));
    CHECK(rel_frobenius(g.mat(), augment(x, a, 1.0).mat()) < 1e-12);
}

TEST_CASE("whitening_matrix strategies on a commuting family with zero features") {
    Eigen::VectorXd a(2), b(2);
    a << 1, 4;
    b << 4, 1;
    const std::vector<SpdMatrix> xs{SpdMatrix(Eigen::MatrixXd(a.asDiagonal())),
                                    SpdMatrix(Eigen::MatrixXd(b.asDiagonal()))};
    const std::vector<Eigen::MatrixXd> zeros{Eigen::MatrixXd::Zero(2, 1),
                                             Eigen::MatrixXd::Zero(2, 1)};

    // Geometric mean diag(2,2) shows up augmented or not per strategy.
    const auto cfg_zero = [](WhiteningStrategy s) {
        return config(s, FeatureSource::ZEROS, 1.0, 1);
    };
    const SpdMatrix daw = whitening_matrix(xs, zeros, cfg_zero(WhiteningStrategy::DAW));
    CHECK(daw.dim() == 3);
    CHECK(daw(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(daw(1, 1) == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(daw(2, 2) == doctest::Approx(1.0).epsilon(1e-12));

    const SpdMatrix maw = whitening_matrix(xs, zeros, cfg_zero(WhiteningStrategy::MAW));
    CHECK(rel_frobenius(maw.mat(), daw.mat()) < 1e-8);

    const SpdMatrix wpa = whitening_matrix(xs, zeros, cfg_zero(WhiteningStrategy::WPA));
    CHECK(wpa.dim() == 2);
    CHECK(wpa(0, 0) == doctest::Approx(2.0).epsilon(1e-8));

    // GLOBAL_COV takes the arithmetic mean instead: diag(2.5, 2.5).
    const SpdMatrix glob =
        whitening_matrix(xs, zeros, cfg_zero(WhiteningStrategy::GLOBAL_COV));
    CHECK(glob.dim() == 2);
    CHECK(glob(0, 0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(glob(1, 1) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("DAW recentres the enriched family at the identity") {
    Rng rng(6);
    std::vector<SpdMatrix> xs;
    std::vector<Eigen::MatrixXd> as;
    make_channel(rng, 4, 40, xs, as);
    const auto cfg = config(WhiteningStrategy::DAW);
    const auto enriched = enrich_recording_channel(xs, as, cfg);
    const SpdMatrix mean = affine_invariant_mean(enriched);
    CHECK((mean.mat() - Eigen::MatrixXd::Identity(5, 5)).norm() <= 1e-6);
}

TEST_CASE("MAW and WPA keep the enriched mean near the identity") {
    // Fixture mirrors pipeline proportions: feature magnitudes well below
    // the covariance scale, as averaged PSD values of z-scored signals are.
    Rng rng(7);
    std::vector<SpdMatrix> xs;
    std::vector<Eigen::MatrixXd> as;
    make_channel(rng, 4, 40, xs, as);
    for (auto& a : as) a *= 0.3;
    for (const auto strategy : {WhiteningStrategy::MAW, WhiteningStrategy::WPA}) {
        const auto enriched = enrich_recording_channel(xs, as, config(strategy));
        const SpdMatrix mean = affine_invariant_mean(enriched);
        // Regression bound, looser than DAW's exact recentring.
        CHECK((mean.mat() - Eigen::MatrixXd::Identity(5, 5)).norm() <= 0.5);
    }
}

TEST_CASE("zero features collapse MAW onto DAW") {
    Rng rng(8);
    std::vector<SpdMatrix> xs;
    std::vector<Eigen::MatrixXd> as;
    make_channel(rng, 3, 12, xs, as);
    std::vector<Eigen::MatrixXd> zeros(xs.size(), Eigen::MatrixXd::Zero(3, 1));

    const auto daw = enrich_recording_channel(
        xs, zeros, config(WhiteningStrategy::DAW, FeatureSource::ZEROS));
    const auto maw = enrich_recording_channel(
        xs, zeros, config(WhiteningStrategy::MAW, FeatureSource::ZEROS));
    REQUIRE(daw.size() == maw.size());
    for (std::size_t i = 0; i < daw.size(); ++i) {
        // With A = 0 the augmented matrices share the same block-diagonal
        // form, so Eqs. collapse and outputs agree to solver precision.
        CHECK((daw[i].mat() - maw[i].mat()).norm() < 1e-8);
    }
}

TEST_CASE("WPA whitens before augmenting: unaugmented mean recentres") {
    Rng rng(9);
    std::vector<SpdMatrix> xs;
    std::vector<Eigen::MatrixXd> as;
    make_channel(rng, 4, 30, xs, as);
    const auto cfg = config(WhiteningStrategy::WPA);
    const SpdMatrix g = whitening_matrix(xs, as, cfg);
    std::vector<SpdMatrix> whitened;
    for (const auto& x : xs) whitened.push_back(whiten(x, g));
    const SpdMatrix mean = affine_invariant_mean(whitened);
    CHECK((mean.mat() - Eigen::MatrixXd::Identity(4, 4)).norm() <= 1e-6);
}

TEST_CASE("enrich_recording_channel composes per strategy and keeps order") {
    Rng rng(10);
    std::vector<SpdMatrix> xs;
    std::vector<Eigen::MatrixXd> as;
    make_channel(rng, 3, 8, xs, as);

    for (const auto strategy :
         {WhiteningStrategy::DAW, WhiteningStrategy::MAW, WhiteningStrategy::WPA,
          WhiteningStrategy::GLOBAL_COV}) {
        const auto cfg = config(strategy);
        const SpdMatrix g = whitening_matrix(xs, as, cfg);
        const auto enriched = enrich_recording_channel(xs, as, cfg);
        REQUIRE(enriched.size() == xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const bool augment_first = strategy == WhiteningStrategy::DAW ||
                                       strategy == WhiteningStrategy::MAW;
            const SpdMatrix expected =
                augment_first ? whiten(augment(xs[i], as[i], cfg.alpha), g)
                              : augment(whiten(xs[i], g), as[i], cfg.alpha);
            CHECK(rel_frobenius(enriched[i].mat(), expected.mat()) < 1e-12);
            CHECK(enriched[i].dim() == 4);
        }
    }
}

TEST_CASE("identity inputs with zero features stay identity under MAW") {
    std::vector<SpdMatrix> xs(5, SpdMatrix::identity(3));
    std::vector<Eigen::MatrixXd> zeros(5, Eigen::MatrixXd::Zero(3, 1));
    const auto enriched = enrich_recording_channel(
        xs, zeros, config(WhiteningStrategy::MAW, FeatureSource::ZEROS));
    for (const auto& m : enriched) {
        CHECK((m.mat() - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-9);
    }
}

TEST_CASE("MAW on a commuting 3-element family has closed-form diagonals") {
    // X_i = diag(a_i, b_i) with zero features: the whitening matrix is the
    // elementwise geometric mean augmented with the identity block, and the
    // enriched matrices are diag(a_i/g_a, b_i/g_b, 1).
    Eigen::VectorXd d1(2), d2(2), d3(2);
    d1 << 1, 8;
    d2 << 2, 2;
    d3 << 4, 1;
    const std::vector<SpdMatrix> xs{SpdMatrix(Eigen::MatrixXd(d1.asDiagonal())),
                                    SpdMatrix(Eigen::MatrixXd(d2.asDiagonal())),
                                    SpdMatrix(Eigen::MatrixXd(d3.asDiagonal()))};
    const std::vector<Eigen::MatrixXd> zeros(3, Eigen::MatrixXd::Zero(2, 1));
    const double ga = std::cbrt(1.0 * 2.0 * 4.0);  // = 2
    const double gb = std::cbrt(8.0 * 2.0 * 1.0);  // ~ 2.5198
    const auto enriched = enrich_recording_channel(
        xs, zeros, config(WhiteningStrategy::MAW, FeatureSource::ZEROS));
    for (std::size_t i = 0; i < 3; ++i) {
        const Eigen::VectorXd d = (i == 0 ? d1 : i == 1 ? d2 : d3);
        CHECK(enriched[i](0, 0) == doctest::Approx(d(0) / ga).epsilon(1e-7));
        CHECK(enriched[i](1, 1) == doctest::Approx(d(1) / gb).epsilon(1e-7));
        CHECK(enriched[i](2, 2) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("empty inputs are rejected") {
    CHECK_THROWS_AS(whitening_matrix({}, {}, config(WhiteningStrategy::MAW)), EmptyInput);
    CHECK_THROWS_AS(enrich_recording_channel({}, {}, config(WhiteningStrategy::DAW)),
                    EmptyInput);
}
