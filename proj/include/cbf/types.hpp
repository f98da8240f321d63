#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbf {

// Numerical thresholds shared by the region tests and the solvers.
// The defaults are engineering choices, not theory; everything that
// consumes them accepts an override.
struct Tolerances {
  double rank = 1e-9;    // relative singular-value cutoff for the B_I rank test
  double dual = 1e-9;    // multipliers may be this far below zero
  double primal = 1e-9;  // inactive rows may carry this much positive slack
};

// Thrown when an enumeration would visit more subsets than the caller's budget.
class BudgetExceededError : public std::runtime_error {
 public:
  BudgetExceededError(const std::string& where, std::size_t required, std::size_t budget)
      : std::runtime_error(where + ": subset enumeration needs " + std::to_string(required) +
                           " checks, budget is " + std::to_string(budget)),
        required_(required),
        budget_(budget) {}

  std::size_t required() const noexcept { return required_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t required_;
  std::size_t budget_;
};

}  // namespace cbf
