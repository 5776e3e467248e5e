#include "nefshrink/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace nefshrink {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    while (true) {
        const auto pos = s.find(sep);
        parts.push_back(trim(s.substr(0, pos)));
        if (pos == std::string_view::npos) break;
        s = s.substr(pos + 1);
    }
    return parts;
}

double to_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v))
        throw std::invalid_argument(fmt::format("config key '{}': '{}' is not a number", key, value));
    return v;
}

long long to_integer(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const long long v = std::strtoll(value.c_str(), &end, 10);
    if (value.empty() || end != value.c_str() + value.size())
        throw std::invalid_argument(fmt::format("config key '{}': '{}' is not an integer", key, value));
    return v;
}

std::vector<int> to_pattern(const std::string& key, const std::string& value) {
    std::vector<int> out;
    const std::string body = value.rfind("cycle:", 0) == 0 ? value.substr(6) : value;
    for (const auto& part : split(body, ','))
        out.push_back(static_cast<int>(to_integer(key, part)));
    if (out.empty()) throw std::invalid_argument(fmt::format("config key '{}' is empty", key));
    return out;
}

std::vector<int> expand(const std::vector<int>& pattern, Index n) {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pattern[i % pattern.size()];
    return out;
}

}  // namespace

Index PRule::dimension(int n) const {
    if (kind == Kind::Fixed) return fixed;
    const auto p = static_cast<Index>(std::floor(std::pow(static_cast<double>(n), gamma) + 1e-9));
    return std::max<Index>(p, 1);
}

void ExperimentConfig::validate() const {
    if (n_grid.empty()) throw std::invalid_argument("config: n_grid is empty");
    for (std::size_t k = 0; k < n_grid.size(); ++k) {
        if (n_grid[k] < 2) throw std::invalid_argument("config: n_grid entries must be >= 2");
        if (k > 0 && n_grid[k] <= n_grid[k - 1])
            throw std::invalid_argument("config: n_grid must be increasing");
    }
    if (replications < 1) throw std::invalid_argument("config: M must be >= 1");
    if (p_rule.kind == PRule::Kind::Fixed && p_rule.fixed < 1)
        throw std::invalid_argument("config: p must be >= 1");
    if (p_rule.kind == PRule::Kind::Power && !(p_rule.gamma >= 0.0))
        throw std::invalid_argument("config: gamma must be >= 0");
    if (sup_gap_points < 0) throw std::invalid_argument("config: K_grid must be >= 0");
    if (!location && !grand_mean) throw std::invalid_argument("config: mode selects nothing");
    if (theta_rule.kind == ThetaRule::Kind::Uniform && !(theta_rule.lo <= theta_rule.hi))
        throw std::invalid_argument("config: theta_rule uniform needs lo <= hi");
    for (int t : tau_pattern)
        if (t < 1) throw std::invalid_argument("config: tau entries must be >= 1");
    solver.validate();
    family_for(n_grid.front());  // family parameter checks
}

FamilySpec ExperimentConfig::family_for(Index n) const {
    std::optional<std::vector<int>> trials;
    if (family == FamilyKind::Multinomial || family == FamilyKind::NegMultinomial) {
        if (trials_pattern.empty())
            throw std::invalid_argument(fmt::format("config: family {} needs N", to_token(family)));
        trials = expand(trials_pattern, n);
    }
    return make_family(family, family == FamilyKind::Gamma ? lambda : std::nullopt, trials);
}

IntMatrix ExperimentConfig::tau_for(Index n, Index p) const {
    const FamilySpec spec = family_for(n);
    if (spec.has_trials()) return family_tau(spec, n, p);
    IntMatrix tau(n, p);
    const std::vector<int> rows = expand(tau_pattern, n);
    for (Index i = 0; i < n; ++i) tau.row(i).setConstant(rows[static_cast<std::size_t>(i)]);
    return tau;
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    std::map<std::string, std::string> kv;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(fmt::format("config line {}: expected key = value", line_no));
        const std::string key = trim(body.substr(0, eq));
        if (kv.count(key))
            throw std::invalid_argument(fmt::format("config line {}: duplicate key '{}'", line_no, key));
        kv[key] = trim(body.substr(eq + 1));
    }

    ExperimentConfig cfg;
    bool have_family = false;
    for (const auto& [key, value] : kv) {
        if (key == "family") {
            cfg.family = parse_family_kind(value);
            have_family = true;
        } else if (key == "lambda") {
            cfg.lambda = to_double(key, value);
        } else if (key == "N") {
            cfg.trials_pattern = to_pattern(key, value);
        } else if (key == "tau") {
            cfg.tau_pattern = to_pattern(key, value);
        } else if (key == "theta_rule") {
            const auto parts = split(value, ':');
            if (parts[0] == "uniform" && parts.size() == 3) {
                cfg.theta_rule.kind = ThetaRule::Kind::Uniform;
                cfg.theta_rule.lo = to_double(key, parts[1]);
                cfg.theta_rule.hi = to_double(key, parts[2]);
            } else if (parts[0] == "file" && parts.size() >= 2) {
                cfg.theta_rule.kind = ThetaRule::Kind::File;
                std::filesystem::path path = trim(value.substr(value.find(':') + 1));
                cfg.theta_rule.path = path.is_relative() ? base_dir / path : path;
            } else {
                throw std::invalid_argument(fmt::format("config key 'theta_rule': bad value '{}'", value));
            }
        } else if (key == "n_grid") {
            cfg.n_grid.clear();
            for (const auto& part : split(value, ','))
                cfg.n_grid.push_back(static_cast<int>(to_integer(key, part)));
        } else if (key == "p_rule") {
            if (value == "fixed")
                cfg.p_rule.kind = PRule::Kind::Fixed;
            else if (value == "power")
                cfg.p_rule.kind = PRule::Kind::Power;
            else
                throw std::invalid_argument(fmt::format("config key 'p_rule': bad value '{}'", value));
        } else if (key == "p") {
            cfg.p_rule.fixed = static_cast<int>(to_integer(key, value));
        } else if (key == "gamma") {
            cfg.p_rule.gamma = to_double(key, value);
        } else if (key == "M") {
            cfg.replications = static_cast<int>(to_integer(key, value));
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(to_integer(key, value));
        } else if (key == "mode") {
            if (value == "location")
                cfg.location = true, cfg.grand_mean = false;
            else if (value == "grandmean")
                cfg.location = false, cfg.grand_mean = true;
            else if (value == "both")
                cfg.location = true, cfg.grand_mean = true;
            else
                throw std::invalid_argument(fmt::format("config key 'mode': bad value '{}'", value));
        } else if (key == "competitors") {
            cfg.competitors.clear();
            if (!value.empty())
                for (const auto& part : split(value, ',')) cfg.competitors.push_back(parse_competitor(part));
        } else if (key == "K_grid") {
            cfg.sup_gap_points = static_cast<int>(to_integer(key, value));
        } else if (key == "max_iter") {
            cfg.solver.max_outer_iterations = static_cast<int>(to_integer(key, value));
        } else if (key == "tol") {
            cfg.solver.tolerance = to_double(key, value);
        } else {
            throw std::invalid_argument(fmt::format("config: unknown key '{}'", key));
        }
    }
    if (!have_family) throw std::invalid_argument("config: missing key 'family'");
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot read config '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

}  // namespace nefshrink
