#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace otfs_radar {

/// Argument outside the domain of a physical formula or search extent.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or inconsistent configuration. Carries the offending key and
/// line (line 0 when the error is not tied to a file).
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, std::size_t line, const std::string& what)
        : std::runtime_error(format(key, line, what)), key_(key), line_(line) {}

    const std::string& key() const noexcept { return key_; }
    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& key, std::size_t line, const std::string& what) {
        std::string msg = "config error";
        if (line > 0) msg += " at line " + std::to_string(line);
        if (!key.empty()) msg += " (key '" + key + "')";
        return msg + ": " + what;
    }

    std::string key_;
    std::size_t line_;
};

/// Allocation would exceed the configured memory budget.
class ResourceError : public std::runtime_error {
public:
    ResourceError(std::size_t required, std::size_t budget)
        : std::runtime_error("operator cache needs " + std::to_string(required) +
                             " bytes, budget is " + std::to_string(budget) + " bytes"),
          required_(required),
          budget_(budget) {}

    std::size_t required_bytes() const noexcept { return required_; }
    std::size_t budget_bytes() const noexcept { return budget_; }

private:
    std::size_t required_;
    std::size_t budget_;
};

/// Gain Gram matrix too ill-conditioned to solve; names the colliding pair.
class IllConditionedError : public std::runtime_error {
public:
    IllConditionedError(std::size_t first, std::size_t second, double condition)
        : std::runtime_error("gain system ill-conditioned (cond " + std::to_string(condition) +
                             "): candidates " + std::to_string(first) + " and " +
                             std::to_string(second) + " are indistinguishable"),
          first_(first),
          second_(second),
          condition_(condition) {}

    std::size_t first() const noexcept { return first_; }
    std::size_t second() const noexcept { return second_; }
    double condition() const noexcept { return condition_; }

private:
    std::size_t first_;
    std::size_t second_;
    double condition_;
};

/// Fisher information not invertible; lists names of the parameters that
/// span the null space, e.g. "psi[0]".
class SingularFisherError : public std::runtime_error {
public:
    explicit SingularFisherError(std::vector<std::string> params)
        : std::runtime_error(format(params)), params_(std::move(params)) {}

    const std::vector<std::string>& parameters() const noexcept { return params_; }

private:
    static std::string format(const std::vector<std::string>& params) {
        std::string msg = "Fisher information is singular; unidentifiable:";
        for (const auto& p : params) msg += " " + p;
        return msg;
    }

    std::vector<std::string> params_;
};

}  // namespace otfs_radar
