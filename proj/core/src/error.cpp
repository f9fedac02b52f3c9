#include "rulehte/error.hpp"

namespace rulehte {

ExitCode exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) return ExitCode::config;
    if (dynamic_cast<const DataError*>(&e) != nullptr) return ExitCode::data;
    if (dynamic_cast<const NumericalError*>(&e) != nullptr) return ExitCode::numerical;
    return ExitCode::unknown;
}

}  // namespace rulehte
