#pragma once

#include <stdexcept>
#include <string>

namespace gittins {

/// Conditional mean residual interarrival time is not uniformly bounded.
class UnboundedResidual : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rank table queried outside the ages it was built for.
class DomainExceeded : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// The simulated work process kept growing over the tail of the horizon.
class NonConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InsufficientSamples : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Recycling rate blew up at some r-grid point.
class RecyclingStorm : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent experiment description.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gittins
