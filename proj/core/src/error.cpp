#include "nebula/error.hpp"

namespace nebula {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::malformed_record: return "MalformedRecord";
    case Errc::schema_violation: return "SchemaViolation";
    case Errc::transport_desync: return "TransportDesync";
    case Errc::incomplete_rule: return "IncompleteRule";
    case Errc::file_unreadable: return "FileUnreadable";
    case Errc::corrupt_container: return "CorruptContainer";
    case Errc::version_mismatch: return "VersionMismatch";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::empty_session: return "EmptySession";
    case Errc::missing_summary: return "MissingSummary";
    case Errc::clock_regression: return "ClockRegression";
    case Errc::degenerate_labels: return "DegenerateLabels";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::state_desync: return "StateDesync";
    case Errc::zero_duration: return "ZeroDuration";
    case Errc::missing_weights: return "MissingWeights";
    case Errc::stage_failed: return "StageFailed";
  }
  return "Unknown";
}

namespace {

std::string compose(Errc code, const std::string& subject, const std::string& detail) {
  std::string msg(errc_name(code));
  if (!subject.empty()) msg += "(" + subject + ")";
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}

}  // namespace

Error::Error(Errc code, std::string subject, const std::string& detail)
    : std::runtime_error(compose(code, subject, detail)), code_(code), subject_(std::move(subject)), detail_(detail) {}

}  // namespace nebula
