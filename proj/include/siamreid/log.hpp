#pragma once

#include <ostream>
#include <string_view>

namespace siamreid {

/// Diagnostic sink for warnings and progress; std::clog unless redirected.
/// Pass nullptr to silence.
void set_log_stream(std::ostream* stream) noexcept;
void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace siamreid
