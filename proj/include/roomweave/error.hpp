#pragma once

#include <stdexcept>
#include <string>

namespace roomweave {

/// Machine-readable failure categories. The CLI prints the code verbatim.
enum class ErrorCode {
    Scene,     // E_SCENE: dataset missing or malformed
    Mesh,      // E_MESH: mesh file unreadable or invalid
    Config,    // E_CONFIG: violated precondition on parameters
    Geometry,  // E_GEOMETRY: invalid view/projection request
    Numeric,   // E_NUMERIC: degenerate numeric input
    Denoiser,  // E_DENOISER: denoiser/codec contract violation
    Depth,     // E_DEPTH: depth predictor failure
    Bridge,    // E_BRIDGE: wire protocol or connection failure
    Io,        // E_IO: filesystem failure
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace roomweave
