#ifndef POISSON_MALLIAVIN_ERROR_HPP
#define POISSON_MALLIAVIN_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pm {

// All library failures derive from std::runtime_error so callers can catch
// one base and still dispatch on the concrete kind.
struct invalid_window : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct dimension_mismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct feasibility_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite integrand values, non-positive variance estimates, NaN terms.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

} // namespace pm

#endif
