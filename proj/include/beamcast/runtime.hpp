#pragma once

#include <algorithm>
#include <cstdlib>
#include <string_view>
#include <thread>

namespace beamcast {

/// Reference mode (BEAMCAST_REFERENCE set to anything but "0" or empty) turns
/// every optional parallelism off.
inline bool reference_mode()
{
    const char* value = std::getenv("BEAMCAST_REFERENCE");
    return value != nullptr && std::string_view(value) != "" && std::string_view(value) != "0";
}

/// Worker count honouring reference mode; 0 means one per hardware thread.
inline unsigned worker_threads(unsigned requested)
{
    if (reference_mode()) {
        return 1;
    }
    if (requested == 0) {
        return std::max(1U, std::thread::hardware_concurrency());
    }
    return requested;
}

} // namespace beamcast
