#pragma once

#include <functional>
#include <string>

namespace ascan {

using WarningSink = std::function<void(const std::string&)>;

/// Routes library warnings. The default sink writes "warning: ..." to
/// stderr; passing an empty function restores it. Returns the old sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(const std::string& message);

}  // namespace ascan
