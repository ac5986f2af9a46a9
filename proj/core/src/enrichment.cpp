#include "spdseq/enrichment.hpp"

#include <sstream>

namespace spdseq {

std::string to_string(WhiteningStrategy s) {
    switch (s) {
        case WhiteningStrategy::DAW: return "DAW";
        case WhiteningStrategy::MAW: return "MAW";
        case WhiteningStrategy::WPA: return "WPA";
        case WhiteningStrategy::GLOBAL_COV: return "GLOBAL_COV";
    }
    return "?";
}

std::string to_string(FeatureSource f) {
    return f == FeatureSource::AVG_PSD ? "AVG_PSD" : "ZEROS";
}

WhiteningStrategy whitening_strategy_from_string(const std::string& s) {
    if (s == "DAW") return WhiteningStrategy::DAW;
    if (s == "MAW") return WhiteningStrategy::MAW;
    if (s == "WPA") return WhiteningStrategy::WPA;
    if (s == "GLOBAL_COV") return WhiteningStrategy::GLOBAL_COV;
    throw ConfigError("unknown whitening strategy: " + s);
}

FeatureSource feature_source_from_string(const std::string& s) {
    if (s == "AVG_PSD") return FeatureSource::AVG_PSD;
    if (s == "ZEROS") return FeatureSource::ZEROS;
    throw ConfigError("unknown feature source: " + s);
}

void EnrichmentConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("EnrichmentConfig: alpha must be positive");
    if (k < 0) throw ConfigError("EnrichmentConfig: k must be nonnegative");
    if (feature_source == FeatureSource::AVG_PSD && k != 1) {
        throw ConfigError("EnrichmentConfig: AVG_PSD features require k == 1");
    }
    if (feature_source == FeatureSource::ZEROS && k > 1) {
        throw ConfigError("EnrichmentConfig: ZEROS features require k <= 1");
    }
}

SpdMatrix augment(const SpdMatrix& x, const Eigen::MatrixXd& a, double alpha) {
    const int n = x.dim();
    const int k = static_cast<int>(a.cols());
    if (a.rows() != n) {
        std::ostringstream os;
        os << "augment: feature matrix has " << a.rows() << " rows, expected " << n;
        throw DimensionMismatch(os.str());
    }
    if (!a.allFinite()) throw DimensionMismatch("augment: non-finite feature entries");
    if (k == 0) return x;

    const int m = n + k;
    Eigen::MatrixXd out(m, m);
    const Eigen::MatrixXd sa = alpha * a;
    out.topLeftCorner(n, n) = x.mat() + sa * sa.transpose();
    out.topRightCorner(n, k) = sa;
    out.bottomLeftCorner(k, n) = sa.transpose();
    out.bottomRightCorner(k, k) = Eigen::MatrixXd::Identity(k, k);
    return SpdMatrix(out);
}

SpdMatrix whiten(const SpdMatrix& xp, const SpdMatrix& g) {
    if (xp.dim() != g.dim()) throw DimensionMismatch("whiten: dimensions differ");
    const Eigen::MatrixXd g_inv_half = matrix_power(g, -0.5).mat();
    return SpdMatrix(g_inv_half * xp.mat() * g_inv_half);
}

namespace {

void check_aligned(const std::vector<SpdMatrix>& xs, const std::vector<Eigen::MatrixXd>& as,
                   const EnrichmentConfig& cfg) {
    cfg.validate();
    if (xs.empty()) throw EmptyInput("enrichment: empty matrix list");
    if (cfg.k > 0 && as.size() != xs.size()) {
        throw DimensionMismatch("enrichment: feature list not aligned with matrix list");
    }
}

} // namespace

SpdMatrix whitening_matrix(const std::vector<SpdMatrix>& xs,
                           const std::vector<Eigen::MatrixXd>& as,
                           const EnrichmentConfig& cfg) {
    check_aligned(xs, as, cfg);
    switch (cfg.strategy) {
        case WhiteningStrategy::DAW: {
            std::vector<SpdMatrix> augmented;
            augmented.reserve(xs.size());
            for (std::size_t i = 0; i < xs.size(); ++i) {
                augmented.push_back(augment(xs[i], as[i], cfg.alpha));
            }
            return affine_invariant_mean(augmented);
        }
        case WhiteningStrategy::MAW: {
            const SpdMatrix g_prime = affine_invariant_mean(xs);
            if (cfg.k == 0) return g_prime;
            const Eigen::MatrixXd a_mean = euclidean_mean(as);
            return augment(g_prime, a_mean, cfg.alpha);
        }
        case WhiteningStrategy::WPA:
            return affine_invariant_mean(xs);
        case WhiteningStrategy::GLOBAL_COV: {
            std::vector<Eigen::MatrixXd> raw;
            raw.reserve(xs.size());
            for (const auto& x : xs) raw.push_back(x.mat());
            return SpdMatrix(euclidean_mean(raw));
        }
    }
    throw ConfigError("whitening_matrix: unhandled strategy");
}

std::vector<SpdMatrix> enrich_recording_channel(const std::vector<SpdMatrix>& xs,
                                                const std::vector<Eigen::MatrixXd>& as,
                                                const EnrichmentConfig& cfg) {
    check_aligned(xs, as, cfg);
    const SpdMatrix g = whitening_matrix(xs, as, cfg);
    std::vector<SpdMatrix> out;
    out.reserve(xs.size());
    const bool augment_first = cfg.strategy == WhiteningStrategy::DAW ||
                               cfg.strategy == WhiteningStrategy::MAW;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (augment_first) {
            out.push_back(whiten(augment(xs[i], cfg.k > 0 ? as[i] : Eigen::MatrixXd(xs[i].dim(), 0),
                                         cfg.alpha),
                                 g));
        } else {
            const SpdMatrix whitened = whiten(xs[i], g);
            out.push_back(cfg.k > 0 ? augment(whitened, as[i], cfg.alpha) : whitened);
        }
    }
    return out;
}

} // namespace spdseq
