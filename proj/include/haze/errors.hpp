#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace haze {

/// Input files could not be ingested (unpaired, unreadable, malformed).
class IngestionError : public std::runtime_error {
  public:
    explicit IngestionError(const std::string& msg, std::vector<std::string> offenders = {})
        : std::runtime_error(format(msg, offenders)), offenders_(std::move(offenders)) {}

    const std::vector<std::string>& offenders() const { return offenders_; }

  private:
    static std::string format(const std::string& msg, const std::vector<std::string>& offenders) {
        std::string s = msg;
        for (const auto& o : offenders) s += "\n  " + o;
        return s;
    }
    std::vector<std::string> offenders_;
};

/// Transmission fell below the configured floor while inverting the haze model.
class LowTransmissionError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Hazy and clear inputs coincide; the recovery problem has no unique
/// solution (zero haze is reproduced by any visibility).
class DegenerateDecompositionError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Least-squares system is rank deficient.
class SingularFitError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

/// Depth evaluation found no pixels with valid ground truth.
class NoValidPixelsError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

}  // namespace haze
