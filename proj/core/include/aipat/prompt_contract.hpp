#pragma once

#include <string_view>

// Fixed strings shared by the prompt builders and the offline mock responder.
// Changing any of them changes prompt wording, so bump the matching version.
namespace aipat::prompt {

inline constexpr std::string_view kGradingSchemaVersion = "aipat.grading/v1";
inline constexpr std::string_view kVerificationSchemaVersion = "aipat.verification/v1";
inline constexpr std::string_view kAppealSchemaVersion = "aipat.appeal-review/v1";

inline constexpr std::string_view kContractPrefix = "Output contract: ";
inline constexpr std::string_view kCriteriaOrderPrefix = "Include exactly one entry per criterion, in this order: ";

// Free text is fenced so answers cannot be confused with instructions.
inline constexpr std::string_view kOpenFence = "<<<";
inline constexpr std::string_view kCloseFence = ">>>";

inline constexpr std::string_view kBlankAnswerDirective =
    "BLANK ANSWER: the student left this question blank. Award the none tier (0 points) for every "
    "criterion and use the feedback to describe what a complete answer would contain.";

inline constexpr std::string_view kHandwrittenHeading = "### Handwritten Answer";
inline constexpr std::string_view kTypedHeading = "### Typed Transcription";
inline constexpr std::string_view kIllegibleMarker = "[ILLEGIBLE]";

inline constexpr std::string_view kCorrectiveSuffix =
    "\n\nYour previous reply was not valid; emit only the schema.";

inline constexpr std::string_view kDefaultSystemRole =
    "You are a teaching assistant evaluating a student's answers on Object-Oriented Programming concepts "
    "in C++ or Java for correctness and completeness.";

}  // namespace aipat::prompt
