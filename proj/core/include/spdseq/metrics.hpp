#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

#include "spdseq/errors.hpp"

namespace spdseq::harness {

/// Classification quality for one evaluation: confusion matrix (rows truth,
/// columns prediction), per-class F1, macro F1 and accuracy, all scores in
/// percent. MF1 is the unweighted mean of the per-class F1 values; a class
/// with neither true nor predicted instances contributes F1 = 0 and is
/// still counted.
struct MetricsReport {
    Eigen::MatrixXd confusion;
    std::vector<double> f1;
    double mf1 = 0.0;
    double accuracy = 0.0;

    int num_classes() const { return static_cast<int>(confusion.rows()); }
};

MetricsReport metrics_from_confusion(const Eigen::MatrixXd& confusion);

MetricsReport evaluate_predictions(const std::vector<int>& truth,
                                   const std::vector<int>& predicted, int num_classes);

/// Mean and sample standard deviation (n-1 divisor; 0 for a single fold)
/// of each metric across folds.
struct AggregateReport {
    int folds = 0;
    double mf1_mean = 0.0, mf1_std = 0.0;
    double accuracy_mean = 0.0, accuracy_std = 0.0;
    std::vector<double> f1_mean, f1_std;
};

AggregateReport aggregate(const std::vector<MetricsReport>& reports);

/// One metrics document per run: key = value text plus a CSV confusion
/// matrix next to it (<stem>_confusion.csv).
void save_metrics(const std::filesystem::path& path, const MetricsReport& report);
MetricsReport load_metrics(const std::filesystem::path& path);

} // namespace spdseq::harness
