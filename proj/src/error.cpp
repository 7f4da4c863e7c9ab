#include "egghand/error.hpp"

namespace egghand {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Config: return "config";
        case ErrorKind::MissingFile: return "missing_file";
        case ErrorKind::Io: return "io";
        case ErrorKind::BadMagic: return "bad_magic";
        case ErrorKind::BadVersion: return "bad_version";
        case ErrorKind::DimensionMismatch: return "dimension_mismatch";
        case ErrorKind::Truncated: return "truncated";
        case ErrorKind::Integrity: return "integrity";
        case ErrorKind::Unavailable: return "unavailable";
        case ErrorKind::Numerical: return "numerical";
    }
    return "unknown";
}

}  // namespace egghand
