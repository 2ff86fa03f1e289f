#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aipat/store/record_store.hpp"
#include "aipat/time.hpp"

namespace aipat::dist {

inline constexpr std::string_view kAlphanumeric = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";

struct PasswordPolicy {
  int length = 16;
  std::string charset = std::string(kAlphanumeric);

  /// Throws ErrorKind::validation for length < 12 or fewer than 32
  /// distinct symbols.
  void validate() const;
  double entropy_bits() const;
};

/// Uniform over the charset (OpenSSL RAND_bytes with rejection sampling).
std::string generate_password(const PasswordPolicy& policy = {});

struct ArchiveFile {
  std::string name;                           // path inside the archive
  std::optional<std::filesystem::path> source;  // read at build time when set
  std::vector<std::uint8_t> bytes;            // used when source is unset
};

struct ArchiveSpec {
  std::string student_id;
  std::vector<ArchiveFile> files;
};

/// ZIP with WinZip AE-2 entries: AES-256-CTR, PBKDF2-HMAC-SHA1 (1000
/// rounds), HMAC-SHA1-80 over the ciphertext; entries deflated when that
/// helps. Unreadable sources throw ErrorKind::io naming the file.
std::vector<std::uint8_t> encrypt_archive(const ArchiveSpec& spec, const std::string& password,
                                          Timestamp modified = Timestamp{});

struct ExtractedFile {
  std::string name;
  std::vector<std::uint8_t> bytes;
};

/// Every entry is authenticated before any plaintext is returned. A wrong
/// password throws ErrorKind::authentication; a tampered archive
/// ErrorKind::integrity.
std::vector<ExtractedFile> decrypt_archive(std::span<const std::uint8_t> archive, const std::string& password);

struct DistributionReport {
  std::vector<std::string> built;
  std::vector<std::string> skipped;  // archive and ledger entry already present
  std::vector<std::pair<std::string, std::string>> failures;  // student id, reason
};

/// Writes `<out_dir>/<exam_id>/<student_id>.zip` and a ledger entry per
/// student. Duplicate student ids or a student without files reject the
/// whole batch. Re-running rebuilds only what is missing.
DistributionReport build_distribution(store::RecordStore& store, const std::string& exam_id,
                                      const std::vector<ArchiveSpec>& students,
                                      const std::filesystem::path& out_dir, const PasswordPolicy& policy = {},
                                      const std::string& actor = "secure-dist");

/// Operator-only `student_id,archive_path,password` file, created 0600.
void write_ledger_csv(const store::RecordStore& store, const std::string& exam_id, const std::filesystem::path& path);

}  // namespace aipat::dist
