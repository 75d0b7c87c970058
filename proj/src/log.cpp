#include "fuslab/log.hpp"

#include <iostream>
#include <mutex>

namespace fuslab {
namespace {

std::mutex g_mutex;

WarningSink& sink() {
  static WarningSink s = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

WarningSink set_warning_sink(WarningSink s) {
  std::lock_guard lock(g_mutex);
  auto prev = std::move(sink());
  sink() = std::move(s);
  return prev;
}

void warn(std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (sink()) sink()(message);
}

}  // namespace fuslab
