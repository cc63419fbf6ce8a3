#include "mvd/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mvd {

namespace {

const std::map<std::string, std::map<std::string, std::string>>& schema() {
    static const std::map<std::string, std::map<std::string, std::string>> s = {
        {"dataset", {{"name", "digits"}, {"root", "data"}}},
        {"models",
         {{"victim_classifier", "classifier_mnist_victim"},
          {"shadow_classifier", ""},
          {"victim_encoder", ""},
          {"attacker_encoder", "encoder_mnist_shadow"},
          {"decoder", "mvd_mnist"}}},
        {"training",
         {{"classifier_epochs", "3"},
          {"classifier_lr", "0.001"},
          {"classifier_batch", "128"},
          {"victim_train_cap", "0"},
          {"attacker_train_cap", "0"},
          {"vae_iter", "1200"},
          {"vae_lr", "0.001"},
          {"vae_batch", "128"},
          {"calibration_iter", "400"},
          {"calibration_lr", "0.001"},
          {"calibration_batch", "128"}}},
        {"attack",
         {{"threat_model", "double_white_box"},
          {"balance", "0.01"},
          {"confidence", "0"},
          {"target", ""},
          {"adv_iter", "300"},
          {"lr", "0.001"},
          {"batch", "64"}}},
        {"sweep", {{"calibration_rates", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"}, {"kappas", "1,6,11,16,21,26,31,36"}}},
        {"eval", {{"subset_size", "1000"}, {"calibration_rate", "1.0"}}},
        {"seeds", {{"victim", "11"}, {"shadow", "22"}, {"attack", "33"}, {"eval", "44"}, {"session", "55"}}},
        {"output", {{"dir", "runs/out"}}},
        {"service",
         {{"port", "7000"},
          {"encoder", "127.0.0.1:7001"},
          {"classifier", "127.0.0.1:7002"},
          {"benign_decoder", ""},
          {"demo_n", "100"}}},
    };
    return s;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(schema()) {}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return from_text(buf.str(), path);
}

RunConfig RunConfig::from_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line, section;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!schema().count(section))
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        if (section.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        cfg.set(section, key, value);
    }
    return cfg;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    auto sit = schema().find(section);
    if (sit == schema().end()) throw ConfigError("unknown section [" + section + "]");
    if (!sit->second.count(key)) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
    values_[section][key] = value;
}

std::string RunConfig::get(const std::string& section, const std::string& key) const {
    auto sit = values_.find(section);
    if (sit == values_.end()) throw ConfigError("unknown section [" + section + "]");
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
    return kit->second;
}

long RunConfig::get_long(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    try {
        size_t used = 0;
        const long out = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key " + section + "." + key + " is not an integer: '" + v + "'");
    }
}

double RunConfig::get_double(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    try {
        size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key " + section + "." + key + " is not a number: '" + v + "'");
    }
}

std::vector<double> RunConfig::get_list(const std::string& section, const std::string& key) const {
    const std::string v = get(section, key);
    std::vector<double> out;
    std::istringstream is(v);
    std::string item;
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError("key " + section + "." + key + " has a non-numeric entry: '" + item + "'");
        }
    }
    return out;
}

std::string RunConfig::echo() const {
    std::ostringstream os;
    for (const auto& [section, keys] : values_) {
        os << "[" << section << "]\n";
        for (const auto& [key, value] : keys) os << key << " = " << value << "\n";
        os << "\n";
    }
    return os.str();
}

void RunConfig::override_seeds(uint64_t base) {
    const char* names[] = {"victim", "shadow", "attack", "eval", "session"};
    for (uint64_t i = 0; i < 5; ++i) values_["seeds"][names[i]] = std::to_string(base + i);
}

ScenarioPlan RunConfig::to_plan() const {
    ScenarioPlan plan;
    plan.dataset = get("dataset", "name");
    plan.data_root = get("dataset", "root");
    if (const char* env = std::getenv("MVD_DATA_ROOT"); env && *env) plan.data_root = env;

    plan.threat_model = parse_threat_model(get("attack", "threat_model"));
    plan.victim_classifier_preset = get("models", "victim_classifier");
    plan.shadow_classifier_preset = get("models", "shadow_classifier");
    plan.victim_encoder_preset = get("models", "victim_encoder");
    plan.attacker_encoder_preset = get("models", "attacker_encoder");
    plan.decoder_preset = get("models", "decoder");

    plan.attack.balance = get_double("attack", "balance");
    plan.attack.confidence = get_double("attack", "confidence");
    const std::string target = get("attack", "target");
    if (!target.empty()) plan.attack.target = static_cast<int>(get_long("attack", "target"));
    plan.attack.adv_iter = get_long("attack", "adv_iter");
    plan.attack.lr = get_double("attack", "lr");
    plan.attack.batch = get_long("attack", "batch");

    plan.schedule.cls_epochs = get_long("training", "classifier_epochs");
    plan.schedule.cls_lr = get_double("training", "classifier_lr");
    plan.schedule.cls_batch = get_long("training", "classifier_batch");
    plan.schedule.victim_train_cap = get_long("training", "victim_train_cap");
    plan.schedule.attacker_train_cap = get_long("training", "attacker_train_cap");
    plan.schedule.vae_iter = get_long("training", "vae_iter");
    plan.schedule.vae_lr = get_double("training", "vae_lr");
    plan.schedule.vae_batch = get_long("training", "vae_batch");
    plan.schedule.cal_iter = get_long("training", "calibration_iter");
    plan.schedule.cal_lr = get_double("training", "calibration_lr");
    plan.schedule.cal_batch = get_long("training", "calibration_batch");

    plan.eval_subset_size = get_long("eval", "subset_size");
    plan.calibration_rate = get_double("eval", "calibration_rate");

    plan.seeds.victim = static_cast<uint64_t>(get_long("seeds", "victim"));
    plan.seeds.shadow = static_cast<uint64_t>(get_long("seeds", "shadow"));
    plan.seeds.attack = static_cast<uint64_t>(get_long("seeds", "attack"));
    plan.seeds.eval = static_cast<uint64_t>(get_long("seeds", "eval"));
    plan.seeds.session = static_cast<uint64_t>(get_long("seeds", "session"));
    plan.attack.seed = plan.seeds.attack;
    return plan;
}

}  // namespace mvd
