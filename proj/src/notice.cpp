#include "wdro/notice.hpp"

#include <iostream>
#include <mutex>
#include <set>

namespace wdro {
namespace {

std::mutex& notice_mutex() {
  static std::mutex mu;
  return mu;
}

std::function<void(const std::string&)>& handler() {
  static std::function<void(const std::string&)> h = [](const std::string& m) {
    std::cerr << "note: " << m << '\n';
  };
  return h;
}

}  // namespace

void set_notice_handler(std::function<void(const std::string&)> h) {
  std::lock_guard<std::mutex> lock(notice_mutex());
  handler() = std::move(h);
}

void notice(const std::string& message) {
  std::lock_guard<std::mutex> lock(notice_mutex());
  if (handler()) handler()(message);
}

void notice_once(const std::string& message) {
  std::lock_guard<std::mutex> lock(notice_mutex());
  static std::set<std::string> seen;
  if (!seen.insert(message).second) return;
  if (handler()) handler()(message);
}

}  // namespace wdro
