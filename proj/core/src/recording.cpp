#include "spdseq/recording.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

namespace spdseq {

namespace {

std::string join_labels(const std::vector<int>& labels) {
    std::ostringstream os;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) os << ',';
        os << labels[i];
    }
    return os.str();
}

std::vector<int> parse_labels(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

} // namespace

void Recording::validate() const {
    if (num_signals() < 2) throw ConfigError("Recording: need at least 2 signals");
    if (fs <= 90) throw ConfigError("Recording: sampling rate must exceed 90 Hz");
    const long expected = static_cast<long>(kEpochSeconds) * fs * num_epochs();
    if (num_samples() != expected) {
        std::ostringstream os;
        os << "Recording '" << id << "': " << num_samples() << " samples, expected "
           << expected << " (30 s * " << fs << " Hz * " << num_epochs() << " epochs)";
        throw ConfigError(os.str());
    }
    if (!signals.allFinite()) throw ConfigError("Recording: non-finite samples");
}

void write_recording(const std::filesystem::path& dir, const Recording& rec) {
    rec.validate();
    std::filesystem::create_directories(dir);

    {
        std::ofstream hdr(dir / kRecordingHeaderFile);
        if (!hdr) throw IoError("write_recording: cannot write header in " + dir.string());
        hdr << "id=" << rec.id << "\n"
            << "fs=" << rec.fs << "\n"
            << "n=" << rec.num_signals() << "\n"
            << "epochs=" << rec.num_epochs() << "\n"
            << "labels=" << join_labels(rec.labels) << "\n";
    }

    const auto tmp = dir / (std::string(kRecordingSignalFile) + ".tmp");
    {
        std::ofstream bin(tmp, std::ios::binary);
        if (!bin) throw IoError("write_recording: cannot write signals in " + dir.string());
        // Row-major f64: signal 0's samples first.
        for (int i = 0; i < rec.num_signals(); ++i) {
            for (int t = 0; t < rec.num_samples(); ++t) {
                const double v = rec.signals(i, t);
                bin.write(reinterpret_cast<const char*>(&v), sizeof(double));
            }
        }
    }
    std::filesystem::rename(tmp, dir / kRecordingSignalFile);
}

Recording read_recording(const std::filesystem::path& dir) {
    std::ifstream hdr(dir / kRecordingHeaderFile);
    if (!hdr) throw IoError("read_recording: missing header in " + dir.string());

    Recording rec;
    int n = 0, epochs = 0;
    std::string line;
    while (std::getline(hdr, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "id") rec.id = value;
        else if (key == "fs") rec.fs = std::stoi(value);
        else if (key == "n") n = std::stoi(value);
        else if (key == "epochs") epochs = std::stoi(value);
        else if (key == "labels") rec.labels = parse_labels(value);
        else throw ConfigError("read_recording: unknown header key '" + key + "'");
    }
    if (static_cast<int>(rec.labels.size()) != epochs) {
        throw ConfigError("read_recording: label count differs from epochs field");
    }

    const long samples = static_cast<long>(kEpochSeconds) * rec.fs * epochs;
    std::ifstream bin(dir / kRecordingSignalFile, std::ios::binary);
    if (!bin) throw IoError("read_recording: missing signal file in " + dir.string());
    rec.signals.resize(n, samples);
    for (int i = 0; i < n; ++i) {
        for (long t = 0; t < samples; ++t) {
            double v = 0.0;
            if (!bin.read(reinterpret_cast<char*>(&v), sizeof(double))) {
                throw IoError("read_recording: truncated signal file in " + dir.string());
            }
            rec.signals(i, t) = v;
        }
    }
    rec.validate();
    return rec;
}

Recording recording_from_csv(const std::string& id, int fs,
                             const std::filesystem::path& csv_path,
                             const std::vector<int>& labels) {
    std::ifstream in(csv_path);
    if (!in) throw IoError("recording_from_csv: cannot open " + csv_path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ConfigError("recording_from_csv: ragged rows in " + csv_path.string());
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError("recording_from_csv: empty file");

    Recording rec;
    rec.id = id;
    rec.fs = fs;
    rec.labels = labels;
    const int n = static_cast<int>(rows.front().size());
    rec.signals.resize(n, static_cast<long>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t) {
        for (int i = 0; i < n; ++i) rec.signals(i, static_cast<long>(t)) = rows[t][i];
    }
    rec.validate();
    return rec;
}

} // namespace spdseq
