#pragma once

#include <map>
#include <string>

#include "mvd/scenario.hpp"

namespace mvd {

/// Sectioned key=value run configuration. Every key has a shipped default;
/// unknown sections or keys are rejected outright.
class RunConfig {
public:
    RunConfig();  // defaults only

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text, const std::string& origin = "<inline>");

    std::string get(const std::string& section, const std::string& key) const;
    long get_long(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;
    std::vector<double> get_list(const std::string& section, const std::string& key) const;

    void set(const std::string& section, const std::string& key, const std::string& value);

    /// Full resolved dump (defaults included); reparsing it reproduces the
    /// same configuration.
    std::string echo() const;

    ScenarioPlan to_plan() const;

    /// Base-seed override: rewrites the five scenario seeds as N, N+1, ...
    void override_seeds(uint64_t base);

private:
    std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace mvd
