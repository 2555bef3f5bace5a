#pragma once

#include <string_view>

// Text data compiled into the library from core/data/.
namespace nebula::data {

extern const std::string_view kGuardrailInjection;
extern const std::string_view kGuardrailBenign;
extern const std::string_view kParaphrases;
extern const std::string_view kDeviceCatalog;

}  // namespace nebula::data
