#pragma once

#include <stdexcept>
#include <string>

namespace appp {

// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define APPP_DEFINE_ERROR(Name)                 \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

APPP_DEFINE_ERROR(ShapeError);
APPP_DEFINE_ERROR(TapeError);
APPP_DEFINE_ERROR(NumericsError);
APPP_DEFINE_ERROR(ProjectionError);
APPP_DEFINE_ERROR(DegenerateInput);
APPP_DEFINE_ERROR(WrongInterpolator);
APPP_DEFINE_ERROR(AntipodalPoints);
APPP_DEFINE_ERROR(SpaceError);
APPP_DEFINE_ERROR(BatchError);
APPP_DEFINE_ERROR(ParseError);
APPP_DEFINE_ERROR(ConfigError);
APPP_DEFINE_ERROR(ConsistencyError);

#undef APPP_DEFINE_ERROR

class VersionError : public Error {
public:
    VersionError(int expected, int found)
        : Error("unsupported format_version " + std::to_string(found) +
                " (this build reads version " + std::to_string(expected) + ")"),
          expected_(expected), found_(found) {}
    int expected() const { return expected_; }
    int found() const { return found_; }

private:
    int expected_;
    int found_;
};

} // namespace appp
