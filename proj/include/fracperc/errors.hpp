#pragma once

#include <stdexcept>
#include <string>

namespace fracperc {

// Raised when a computation would exceed a configured depth/size budget.
class BudgetError : public std::runtime_error {
public:
    explicit BudgetError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when a polynomial zero set is singular where a regular value is required.
class SingularityError : public std::runtime_error {
public:
    explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fracperc
