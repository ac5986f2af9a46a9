#include "spdseq/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace spdseq::harness {

MetricsReport metrics_from_confusion(const Eigen::MatrixXd& confusion) {
    if (confusion.rows() != confusion.cols() || confusion.rows() < 1) {
        throw DimensionMismatch("metrics: confusion matrix must be square");
    }
    if ((confusion.array() < 0.0).any()) {
        throw ConfigError("metrics: negative confusion entries");
    }
    const int n = static_cast<int>(confusion.rows());
    MetricsReport report;
    report.confusion = confusion;
    report.f1.resize(static_cast<std::size_t>(n), 0.0);
    for (int c = 0; c < n; ++c) {
        const double tp = confusion(c, c);
        const double fn = confusion.row(c).sum() - tp;
        const double fp = confusion.col(c).sum() - tp;
        const double denom = 2.0 * tp + fp + fn;
        report.f1[static_cast<std::size_t>(c)] = denom > 0.0 ? 100.0 * 2.0 * tp / denom : 0.0;
    }
    double f1_sum = 0.0;
    for (double v : report.f1) f1_sum += v;
    report.mf1 = f1_sum / n;
    const double total = confusion.sum();
    report.accuracy = total > 0.0 ? 100.0 * confusion.trace() / total : 0.0;
    return report;
}

MetricsReport evaluate_predictions(const std::vector<int>& truth,
                                   const std::vector<int>& predicted, int num_classes) {
    if (truth.size() != predicted.size()) {
        throw DimensionMismatch("metrics: truth and prediction lengths differ");
    }
    Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(num_classes, num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        const int p = predicted[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
            throw ConfigError("metrics: label outside class range");
        }
        confusion(t, p) += 1.0;
    }
    return metrics_from_confusion(confusion);
}

AggregateReport aggregate(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw EmptyInput("aggregate: no reports");
    const int n = reports.front().num_classes();
    for (const auto& r : reports) {
        if (r.num_classes() != n) throw DimensionMismatch("aggregate: class counts differ");
    }
    const double count = static_cast<double>(reports.size());

    const auto mean_std = [count](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double v : xs) mean += v;
        mean /= count;
        double var = 0.0;
        if (xs.size() > 1) {
            for (double v : xs) var += (v - mean) * (v - mean);
            var /= (count - 1.0);  // sample convention
        }
        return std::pair<double, double>(mean, std::sqrt(var));
    };

    AggregateReport agg;
    agg.folds = static_cast<int>(reports.size());
    std::vector<double> mf1s, accs;
    for (const auto& r : reports) {
        mf1s.push_back(r.mf1);
        accs.push_back(r.accuracy);
    }
    std::tie(agg.mf1_mean, agg.mf1_std) = mean_std(mf1s);
    std::tie(agg.accuracy_mean, agg.accuracy_std) = mean_std(accs);
    agg.f1_mean.resize(static_cast<std::size_t>(n));
    agg.f1_std.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
        std::vector<double> f1s;
        for (const auto& r : reports) f1s.push_back(r.f1[static_cast<std::size_t>(c)]);
        std::tie(agg.f1_mean[static_cast<std::size_t>(c)],
                 agg.f1_std[static_cast<std::size_t>(c)]) = mean_std(f1s);
    }
    return agg;
}

namespace {

std::filesystem::path confusion_path(const std::filesystem::path& metrics_path) {
    std::filesystem::path p = metrics_path;
    p.replace_filename(p.stem().string() + "_confusion.csv");
    return p;
}

} // namespace

void save_metrics(const std::filesystem::path& path, const MetricsReport& report) {
    {
        std::ofstream out(path);
        if (!out) throw IoError("save_metrics: cannot open " + path.string());
        out.precision(12);
        out << "classes = " << report.num_classes() << "\n";
        out << "mf1 = " << report.mf1 << "\n";
        out << "accuracy = " << report.accuracy << "\n";
        for (int c = 0; c < report.num_classes(); ++c) {
            out << "f1." << c << " = " << report.f1[static_cast<std::size_t>(c)] << "\n";
        }
    }
    {
        std::ofstream csv(confusion_path(path));
        if (!csv) throw IoError("save_metrics: cannot open confusion csv");
        csv.precision(12);
        for (int r = 0; r < report.num_classes(); ++r) {
            for (int c = 0; c < report.num_classes(); ++c) {
                csv << (c ? "," : "") << report.confusion(r, c);
            }
            csv << "\n";
        }
    }
}

MetricsReport load_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_metrics: cannot open " + path.string());
    int classes = 0;
    double mf1 = 0.0, accuracy = 0.0;
    std::vector<std::pair<int, double>> f1s;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        while (!key.empty() && key.back() == ' ') key.pop_back();
        const double value = std::stod(line.substr(eq + 1));
        if (key == "classes") classes = static_cast<int>(value);
        else if (key == "mf1") mf1 = value;
        else if (key == "accuracy") accuracy = value;
        else if (key.rfind("f1.", 0) == 0) f1s.emplace_back(std::stoi(key.substr(3)), value);
    }
    if (classes < 1) throw ConfigError("load_metrics: missing class count in " + path.string());

    MetricsReport report;
    report.mf1 = mf1;
    report.accuracy = accuracy;
    report.f1.assign(static_cast<std::size_t>(classes), 0.0);
    for (const auto& [c, v] : f1s) {
        if (c < 0 || c >= classes) throw ConfigError("load_metrics: f1 index out of range");
        report.f1[static_cast<std::size_t>(c)] = v;
    }
    report.confusion = Eigen::MatrixXd::Zero(classes, classes);
    std::ifstream csv(confusion_path(path));
    if (csv) {
        for (int r = 0; r < classes && std::getline(csv, line); ++r) {
            std::stringstream ss(line);
            std::string cell;
            for (int c = 0; c < classes && std::getline(ss, cell, ','); ++c) {
                report.confusion(r, c) = std::stod(cell);
            }
        }
    }
    return report;
}

} // namespace spdseq::harness
