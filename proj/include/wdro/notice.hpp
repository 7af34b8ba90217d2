#pragma once

#include <functional>
#include <string>

namespace wdro {

/// Receives informational messages such as ignored or clamped options. The
/// default handler writes them to stderr; pass an empty function to silence.
void set_notice_handler(std::function<void(const std::string&)> handler);
void notice(const std::string& message);
/// Like notice, but each distinct message is delivered at most once per process.
void notice_once(const std::string& message);

}  // namespace wdro
