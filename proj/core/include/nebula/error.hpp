#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nebula {

enum class Errc {
  malformed_record,
  schema_violation,
  transport_desync,
  incomplete_rule,
  file_unreadable,
  corrupt_container,
  version_mismatch,
  shape_mismatch,
  empty_session,
  missing_summary,
  clock_regression,
  degenerate_labels,
  non_finite_loss,
  invalid_argument,
  state_desync,
  zero_duration,
  missing_weights,
  stage_failed,
};

std::string_view errc_name(Errc code) noexcept;

// All recoverable failures in the library surface as nebula::Error. `subject`
// names the offending field, file or stage when one applies.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string subject, const std::string& detail = {});

  Errc code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string subject_;
  std::string detail_;
};

}  // namespace nebula
