#pragma once

#include <functional>
#include <string_view>

namespace fuslab {

using WarningSink = std::function<void(std::string_view)>;

// Non-fatal diagnostics (budget guardrails, ignored report fields). The default
// sink writes "warning: ..." to stderr. Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);

}  // namespace fuslab
