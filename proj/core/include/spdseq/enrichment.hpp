#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "spdseq/geometry.hpp"

namespace spdseq {

/// How the per-recording, per-channel whitening matrix is composed with the
/// augmentation step.
enum class WhiteningStrategy {
    DAW,        // direct average whitening: affine-invariant mean of augmented matrices
    MAW,        // mirrored augmentation whitening: augment the means
    WPA,        // whitening prior to augmentation
    GLOBAL_COV, // ablation: Euclidean mean of the unaugmented matrices
};

enum class FeatureSource {
    AVG_PSD, // averaged power spectral density, one feature per signal
    ZEROS,   // zero-valued augmentation ablation
};

std::string to_string(WhiteningStrategy s);
std::string to_string(FeatureSource f);
WhiteningStrategy whitening_strategy_from_string(const std::string& s);
FeatureSource feature_source_from_string(const std::string& s);

/// Configuration of the matrix enrichment step.
struct EnrichmentConfig {
    WhiteningStrategy strategy = WhiteningStrategy::MAW;
    double alpha = 1.0;                         // augmentation factor
    FeatureSource feature_source = FeatureSource::AVG_PSD;
    int k = 1;                                  // features per signal

    /// Enforces alpha > 0, k == 1 for AVG_PSD, and k in {0, 1} for ZEROS
    /// (k == 0 disables augmentation entirely).
    void validate() const;
};

/// Block construction embedding an n x k feature matrix A into a larger SPD
/// matrix:
///   [ X + a^2 A A^T   a A ]
///   [     a A^T       I_k ]
/// The result is SPD for every finite A and alpha. k == 0 returns X.
SpdMatrix augment(const SpdMatrix& x, const Eigen::MatrixXd& a, double alpha);

/// Congruence transport G^{-1/2} X' G^{-1/2} toward the identity.
SpdMatrix whiten(const SpdMatrix& xp, const SpdMatrix& g);

/// Whitening matrix of one recording-channel under the configured strategy.
/// DAW/MAW return an (n+k)-dimensional matrix, WPA/GLOBAL_COV the
/// n-dimensional unaugmented mean.
SpdMatrix whitening_matrix(const std::vector<SpdMatrix>& xs,
                           const std::vector<Eigen::MatrixXd>& as,
                           const EnrichmentConfig& cfg);

/// Full enrichment of one recording-channel: augmentation and whitening
/// composed in the order the strategy prescribes, input order preserved.
std::vector<SpdMatrix> enrich_recording_channel(const std::vector<SpdMatrix>& xs,
                                                const std::vector<Eigen::MatrixXd>& as,
                                                const EnrichmentConfig& cfg);

} // namespace spdseq
