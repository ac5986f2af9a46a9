#include "spdseq/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace spdseq {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' wants true/false, got '" + v + "'");
}

std::vector<std::string> parse_id_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::string join(const std::vector<std::string>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ",";
        out += ids[i];
    }
    return out;
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

} // namespace

std::string RunConfig::effective_cache_tag() const {
    if (!cache_tag.empty()) return cache_tag;
    std::ostringstream os;
    os << lowercase(to_string(enrichment.strategy)) << "_"
       << lowercase(to_string(enrichment.feature_source));
    return os.str();
}

void RunConfig::validate() const {
    if (schema_version != 1) {
        throw ConfigError("config: unsupported schema_version " +
                          std::to_string(schema_version));
    }
    enrichment.validate();
    model.validate();
    train.validate(model.context);
    fold.validate();
}

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream stream(text);
    std::string line;
    int lineno = 0;
    while (std::getline(stream, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "schema_version") cfg.schema_version = std::stoi(value);
        else if (key == "data_dir") cfg.data_dir = value;
        else if (key == "out_dir") cfg.out_dir = value;
        else if (key == "cache_tag") cfg.cache_tag = value;
        else if (key == "strategy") cfg.enrichment.strategy = whitening_strategy_from_string(value);
        else if (key == "alpha") cfg.enrichment.alpha = std::stod(value);
        else if (key == "features") cfg.enrichment.feature_source = feature_source_from_string(value);
        else if (key == "k") cfg.enrichment.k = std::stoi(value);
        else if (key == "sequence_length") {
            const int l = std::stoi(value);
            if (l < 1 || l % 2 == 0) {
                throw ConfigError("config: sequence_length must be odd and positive");
            }
            cfg.model.sequence_length = l;
            cfg.model.context = (l - 1) / 2;
        }
        else if (key == "feature_tokens") cfg.model.feature_tokens = std::stoi(value);
        else if (key == "p") cfg.model.p = std::stoi(value);
        else if (key == "heads") cfg.model.heads = std::stoi(value);
        else if (key == "ff_dim") cfg.model.ff_dim = std::stoi(value);
        else if (key == "layers_intra") cfg.model.layers_intra = std::stoi(value);
        else if (key == "layers_inter") cfg.model.layers_inter = std::stoi(value);
        else if (key == "dropout") cfg.model.dropout = std::stod(value);
        else if (key == "label_smoothing") cfg.model.label_smoothing = std::stod(value);
        else if (key == "classes") cfg.model.classes = std::stoi(value);
        else if (key == "mha") {
            if (value == "SP") cfg.model.mha = model::MhaKind::SP;
            else if (value == "CLASSIC") cfg.model.mha = model::MhaKind::CLASSIC;
            else throw ConfigError("config: mha must be SP or CLASSIC");
        }
        else if (key == "learned_head_weights") {
            cfg.model.learned_head_weights = parse_bool(value, key);
        }
        else if (key == "inter_positional_encoding") {
            cfg.model.inter_positional_encoding = parse_bool(value, key);
        }
        else if (key == "learning_rate") cfg.train.learning_rate = std::stod(value);
        else if (key == "batch_size") cfg.train.batch_size = std::stoi(value);
        else if (key == "max_passes") cfg.train.max_passes = std::stoi(value);
        else if (key == "patience") cfg.train.patience = std::stoi(value);
        else if (key == "seed") cfg.train.seed = std::stoull(value);
        else if (key == "oversample") cfg.train.oversample = parse_bool(value, key);
        else if (key == "clip_test") cfg.train.clip_test = std::stoi(value);
        else if (key == "finetune_from") {
            if (!value.empty()) cfg.train.finetune_from = value;
        }
        else if (key == "fold.train") cfg.fold.train = parse_id_list(value);
        else if (key == "fold.validation") cfg.fold.validation = parse_id_list(value);
        else if (key == "fold.test") cfg.fold.test = parse_id_list(value);
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig parse_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config_text(buffer.str());
}

std::string serialize(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "schema_version = " << cfg.schema_version << "\n";
    os << "data_dir = " << cfg.data_dir.string() << "\n";
    os << "out_dir = " << cfg.out_dir.string() << "\n";
    os << "cache_tag = " << cfg.effective_cache_tag() << "\n";
    os << "strategy = " << to_string(cfg.enrichment.strategy) << "\n";
    os << "alpha = " << cfg.enrichment.alpha << "\n";
    os << "features = " << to_string(cfg.enrichment.feature_source) << "\n";
    os << "k = " << cfg.enrichment.k << "\n";
    os << "sequence_length = " << cfg.model.sequence_length << "\n";
    os << "feature_tokens = " << cfg.model.feature_tokens << "\n";
    os << "p = " << cfg.model.p << "\n";
    os << "heads = " << cfg.model.heads << "\n";
    os << "ff_dim = " << cfg.model.ff_dim << "\n";
    os << "layers_intra = " << cfg.model.layers_intra << "\n";
    os << "layers_inter = " << cfg.model.layers_inter << "\n";
    os << "dropout = " << cfg.model.dropout << "\n";
    os << "label_smoothing = " << cfg.model.label_smoothing << "\n";
    os << "classes = " << cfg.model.classes << "\n";
    os << "mha = " << (cfg.model.mha == model::MhaKind::SP ? "SP" : "CLASSIC") << "\n";
    os << "learned_head_weights = " << (cfg.model.learned_head_weights ? "true" : "false")
       << "\n";
    os << "inter_positional_encoding = "
       << (cfg.model.inter_positional_encoding ? "true" : "false") << "\n";
    os << "learning_rate = " << cfg.train.learning_rate << "\n";
    os << "batch_size = " << cfg.train.batch_size << "\n";
    os << "max_passes = " << cfg.train.max_passes << "\n";
    os << "patience = " << cfg.train.patience << "\n";
    os << "seed = " << cfg.train.seed << "\n";
    os << "oversample = " << (cfg.train.oversample ? "true" : "false") << "\n";
    os << "clip_test = " << cfg.train.clip_test << "\n";
    os << "finetune_from = "
       << (cfg.train.finetune_from ? cfg.train.finetune_from->string() : "") << "\n";
    os << "fold.train = " << join(cfg.fold.train) << "\n";
    os << "fold.validation = " << join(cfg.fold.validation) << "\n";
    os << "fold.test = " << join(cfg.fold.test) << "\n";
    return os.str();
}

std::vector<std::pair<std::string, RunConfig>> ablation_suite(const RunConfig& base) {
    std::vector<std::pair<std::string, RunConfig>> suite;

    const auto with_strategy = [&base](WhiteningStrategy s) {
        RunConfig cfg = base;
        cfg.enrichment.strategy = s;
        cfg.cache_tag.clear();  // re-derive, the cache contents change
        return cfg;
    };
    suite.emplace_back("enrichment_daw", with_strategy(WhiteningStrategy::DAW));
    suite.emplace_back("enrichment_maw", with_strategy(WhiteningStrategy::MAW));
    suite.emplace_back("enrichment_wpa", with_strategy(WhiteningStrategy::WPA));

    {
        RunConfig cfg = base;
        cfg.enrichment.feature_source = FeatureSource::ZEROS;
        cfg.cache_tag.clear();
        suite.emplace_back("zero_augmentation", cfg);
    }
    suite.emplace_back("global_cov_whitening", with_strategy(WhiteningStrategy::GLOBAL_COV));
    {
        RunConfig cfg = base;
        cfg.model.mha = model::MhaKind::CLASSIC;
        suite.emplace_back("classic_mha", cfg);
    }
    for (int l : {13, 29}) {
        RunConfig cfg = base;
        cfg.model.sequence_length = l;
        cfg.model.context = (l - 1) / 2;
        suite.emplace_back("input_length_" + std::to_string(l), cfg);
    }
    return suite;
}

void write_manifest(const std::filesystem::path& path, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& cache_hashes) {
    std::ofstream out(path);
    if (!out) throw IoError("write_manifest: cannot open " + path.string());
    out << serialize(cfg);
    for (const auto& [recording, hash] : cache_hashes) {
        out << "cache_sha256." << recording << " = " << hash << "\n";
    }
}

} // namespace spdseq
