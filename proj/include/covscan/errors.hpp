#pragma once

#include <stdexcept>
#include <string>

namespace covscan {

// invalid or inconsistent input (bad indices, non-finite data, malformed files)
class invalid_input : public std::invalid_argument {
  public:
    explicit invalid_input(const std::string& what) : std::invalid_argument(what) {}
};

// a numerical routine failed (infeasible program, non-convergence, bad factorization)
class numeric_failure : public std::runtime_error {
  public:
    explicit numeric_failure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace covscan
