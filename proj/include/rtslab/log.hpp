#pragma once

#include <functional>
#include <string_view>

namespace rtslab {

// Warnings go to stderr unless a sink is installed (tests capture them).
using WarningSink = std::function<void(std::string_view)>;

void warn(std::string_view message);
// Returns the previous sink; pass {} to restore stderr.
WarningSink set_warning_sink(WarningSink sink);

}  // namespace rtslab
