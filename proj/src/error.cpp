#include "agfuse/error.hpp"

namespace agfuse {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Format: return "format";
        case ErrorKind::Corruption: return "corruption";
        case ErrorKind::Io: return "io";
        case ErrorKind::Alignment: return "alignment";
        case ErrorKind::Coverage: return "coverage";
        case ErrorKind::Geometry: return "geometry";
        case ErrorKind::Solver: return "solver";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Config: return "config";
        case ErrorKind::Data: return "data";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Partition: return "partition";
        case ErrorKind::Schema: return "schema";
    }
    return "unknown";
}

}  // namespace agfuse
