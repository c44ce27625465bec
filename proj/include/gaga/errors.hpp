#pragma once

#include <stdexcept>
#include <string>

namespace gaga {

/// Malformed or unsupported file content. `section()` names the part of the
/// file that failed validation ("header", "shape_basis", ...).
class FormatError : public std::runtime_error {
public:
    FormatError(std::string section, const std::string& message)
        : std::runtime_error(section + ": " + message), section_(std::move(section)) {}

    [[nodiscard]] const std::string& section() const noexcept { return section_; }

private:
    std::string section_;
};

/// A loss or gradient went non-finite.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gaga
