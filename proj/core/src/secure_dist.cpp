#include "aipat/secure_dist.hpp"

#include <fcntl.h>
#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <set>

#include "aipat/csv.hpp"
#include "aipat/error.hpp"

namespace aipat::dist {

namespace {

using Bytes = std::vector<std::uint8_t>;

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint16_t kAesMethod = 99;
constexpr std::uint16_t kAesExtraId = 0x9901;
constexpr std::uint16_t kVersionNeeded = 51;
constexpr std::uint16_t kFlags = 0x0001 | 0x0800;  // encrypted, UTF-8 names
constexpr int kSaltLen = 16;
constexpr int kKeyLen = 32;
constexpr int kMacLen = 10;
constexpr int kPbkdf2Rounds = 1000;

void put16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v & 0xff));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_bytes(Bytes& b, std::span<const std::uint8_t> s) { b.insert(b.end(), s.begin(), s.end()); }
void put_string(Bytes& b, const std::string& s) { b.insert(b.end(), s.begin(), s.end()); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  void seek(std::size_t pos) {
    if (pos > data_.size()) corrupt();
    pos_ = pos;
  }
  std::size_t pos() const { return pos_; }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(data_[pos_] | (data_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (n > data_.size() - pos_) corrupt();
  }
  [[noreturn]] static void corrupt() { fail(ErrorKind::integrity, "archive is truncated or malformed"); }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

struct DerivedKeys {
  std::array<std::uint8_t, kKeyLen> enc{};
  std::array<std::uint8_t, kKeyLen> mac{};
  std::array<std::uint8_t, 2> verifier{};
};

DerivedKeys derive(const std::string& password, std::span<const std::uint8_t> salt) {
  std::array<std::uint8_t, 2 * kKeyLen + 2> out{};
  if (PKCS5_PBKDF2_HMAC_SHA1(password.data(), static_cast<int>(password.size()), salt.data(),
                             static_cast<int>(salt.size()), kPbkdf2Rounds, static_cast<int>(out.size()),
                             out.data()) != 1) {
    fail(ErrorKind::io, "key derivation failed");
  }
  DerivedKeys k;
  std::copy_n(out.begin(), kKeyLen, k.enc.begin());
  std::copy_n(out.begin() + kKeyLen, kKeyLen, k.mac.begin());
  std::copy_n(out.begin() + 2 * kKeyLen, 2, k.verifier.begin());
  OPENSSL_cleanse(out.data(), out.size());
  return k;
}

// WinZip AES uses CTR mode with a little-endian block counter starting at 1.
void aes_ctr_xor(const std::array<std::uint8_t, kKeyLen>& key, Bytes& data) {
  std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free);
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_ecb(), nullptr, key.data(), nullptr) != 1) {
    fail(ErrorKind::io, "AES initialisation failed");
  }
  EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
  std::array<std::uint8_t, 16> counter{};
  std::array<std::uint8_t, 16> stream{};
  std::uint64_t block = 0;
  for (std::size_t off = 0; off < data.size(); off += 16) {
    ++block;
    for (int i = 0; i < 8; ++i) counter[i] = static_cast<std::uint8_t>((block >> (8 * i)) & 0xff);
    int len = 0;
    if (EVP_EncryptUpdate(ctx.get(), stream.data(), &len, counter.data(), 16) != 1 || len != 16) {
      fail(ErrorKind::io, "AES block encryption failed");
    }
    const std::size_t n = std::min<std::size_t>(16, data.size() - off);
    for (std::size_t i = 0; i < n; ++i) data[off + i] ^= stream[i];
  }
}

std::array<std::uint8_t, kMacLen> mac_of(const std::array<std::uint8_t, kKeyLen>& key,
                                         std::span<const std::uint8_t> ciphertext) {
  unsigned char full[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (HMAC(EVP_sha1(), key.data(), kKeyLen, ciphertext.data(), ciphertext.size(), full, &len) == nullptr) {
    fail(ErrorKind::io, "HMAC computation failed");
  }
  std::array<std::uint8_t, kMacLen> out{};
  std::copy_n(full, kMacLen, out.begin());
  return out;
}

Bytes raw_deflate(const Bytes& in) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    fail(ErrorKind::io, "deflate initialisation failed");
  }
  Bytes out(deflateBound(&zs, static_cast<uLong>(in.size())));
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) fail(ErrorKind::io, "deflate failed");
  out.resize(zs.total_out);
  return out;
}

Bytes raw_inflate(std::span<const std::uint8_t> in, std::size_t expected) {
  z_stream zs{};
  if (inflateInit2(&zs, -15) != Z_OK) fail(ErrorKind::io, "inflate initialisation failed");
  Bytes out(expected);
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) fail(ErrorKind::integrity, "compressed entry is corrupt");
  return out;
}

std::pair<std::uint16_t, std::uint16_t> dos_time_date(Timestamp t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  year_month_day ymd{day};
  int year = static_cast<int>(ymd.year());
  if (year < 1980) return {0, static_cast<std::uint16_t>((0 << 9) | (1 << 5) | 1)};
  if (year > 2107) year = 2107;
  const hh_mm_ss hms{floor<seconds>(t - day)};
  const auto time = static_cast<std::uint16_t>((hms.hours().count() << 11) | (hms.minutes().count() << 5) |
                                               (hms.seconds().count() / 2));
  const auto date = static_cast<std::uint16_t>(((year - 1980) << 9) | (static_cast<unsigned>(ymd.month()) << 5) |
                                               static_cast<unsigned>(ymd.day()));
  return {time, date};
}

Bytes aes_extra(std::uint16_t actual_method) {
  Bytes e;
  put16(e, kAesExtraId);
  put16(e, 7);
  put16(e, 2);  // AE-2
  e.push_back('A');
  e.push_back('E');
  e.push_back(3);  // AES-256
  put16(e, actual_method);
  return e;
}

Bytes read_source(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + p.string());
  Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::io, "error reading " + p.string());
  return b;
}

bool safe_entry_name(const std::string& name) {
  if (name.empty() || name.front() == '/' || name.find('\\') != std::string::npos) return false;
  std::size_t start = 0;
  while (start <= name.size()) {
    const auto end = name.find('/', start);
    const std::string part = name.substr(start, end == std::string::npos ? std::string::npos : end - start);
    if (part.empty() || part == "." || part == "..") return false;
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return true;
}

bool safe_student_id(const std::string& id) {
  if (id.empty() || id.front() == '.') return false;
  return id.find_first_of("/\\") == std::string::npos && id.find('\0') == std::string::npos;
}

void write_file_atomic(const std::filesystem::path& target, const Bytes& bytes) {
  const auto tmp = target.string() + ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) fail(ErrorKind::io, "cannot create " + tmp);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + off, bytes.size() - off);
    if (n <= 0) {
      ::close(fd);
      ::unlink(tmp.c_str());
      fail(ErrorKind::io, "cannot write " + tmp);
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) {
    ::unlink(tmp.c_str());
    fail(ErrorKind::io, "cannot flush " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) fail(ErrorKind::io, "cannot move archive into place: " + ec.message());
}

}  // namespace

void PasswordPolicy::validate() const {
  if (length < 12) fail(ErrorKind::validation, "password length must be at least 12");
  const std::set<char> distinct(charset.begin(), charset.end());
  if (distinct.size() < 32) fail(ErrorKind::validation, "password charset needs at least 32 distinct symbols");
}

double PasswordPolicy::entropy_bits() const {
  const std::set<char> distinct(charset.begin(), charset.end());
  return length * std::log2(static_cast<double>(distinct.size()));
}

std::string generate_password(const PasswordPolicy& policy) {
  policy.validate();
  const std::set<char> distinct_set(policy.charset.begin(), policy.charset.end());
  const std::vector<char> symbols(distinct_set.begin(), distinct_set.end());
  const std::size_t n = symbols.size();
  if (n > 256) fail(ErrorKind::validation, "password charset is limited to 256 symbols");
  const unsigned limit = 256 - (256 % n);  // reject bytes that would bias the draw
  std::string out;
  std::array<unsigned char, 64> pool{};
  while (out.size() < static_cast<std::size_t>(policy.length)) {
    if (RAND_bytes(pool.data(), static_cast<int>(pool.size())) != 1) fail(ErrorKind::io, "system RNG failure");
    for (unsigned char b : pool) {
      if (b >= limit) continue;
      out.push_back(symbols[b % n]);
      if (out.size() == static_cast<std::size_t>(policy.length)) break;
    }
  }
  OPENSSL_cleanse(pool.data(), pool.size());
  return out;
}

std::vector<std::uint8_t> encrypt_archive(const ArchiveSpec& spec, const std::string& password, Timestamp modified) {
  if (spec.files.empty()) fail(ErrorKind::validation, "an archive needs at least one file");
  if (password.empty()) fail(ErrorKind::validation, "archive password must be non-empty");
  std::set<std::string> names;
  for (const auto& f : spec.files) {
    if (!safe_entry_name(f.name)) fail(ErrorKind::validation, "invalid archive entry name '" + f.name + "'");
    if (!names.insert(f.name).second) fail(ErrorKind::validation, "duplicate archive entry '" + f.name + "'");
  }
  const auto [dos_time, dos_date] = dos_time_date(modified);

  Bytes out;
  Bytes central;
  for (const auto& f : spec.files) {
    Bytes plain = f.source ? read_source(*f.source) : f.bytes;
    if (plain.size() > 0xFFFF0000u) fail(ErrorKind::validation, "entry '" + f.name + "' is too large");
    const auto real_size = static_cast<std::uint32_t>(plain.size());
    Bytes payload = plain.empty() ? Bytes{} : raw_deflate(plain);
    std::uint16_t method = 8;
    if (payload.size() >= plain.size()) {
      payload = plain;
      method = 0;
    }
    OPENSSL_cleanse(plain.data(), plain.size());

    std::array<std::uint8_t, kSaltLen> salt{};
    if (RAND_bytes(salt.data(), kSaltLen) != 1) fail(ErrorKind::io, "system RNG failure");
    DerivedKeys keys = derive(password, salt);
    aes_ctr_xor(keys.enc, payload);
    const auto mac = mac_of(keys.mac, payload);

    const auto compressed_size = static_cast<std::uint32_t>(kSaltLen + 2 + payload.size() + kMacLen);
    const Bytes extra = aes_extra(method);
    const auto offset = static_cast<std::uint32_t>(out.size());

    put32(out, kLocalSig);
    put16(out, kVersionNeeded);
    put16(out, kFlags);
    put16(out, kAesMethod);
    put16(out, dos_time);
    put16(out, dos_date);
    put32(out, 0);  // AE-2 carries no CRC
    put32(out, compressed_size);
    put32(out, real_size);
    put16(out, static_cast<std::uint16_t>(f.name.size()));
    put16(out, static_cast<std::uint16_t>(extra.size()));
    put_string(out, f.name);
    put_bytes(out, extra);
    put_bytes(out, salt);
    put_bytes(out, keys.verifier);
    put_bytes(out, payload);
    put_bytes(out, mac);

    put32(central, kCentralSig);
    put16(central, static_cast<std::uint16_t>((3 << 8) | kVersionNeeded));
    put16(central, kVersionNeeded);
    put16(central, kFlags);
    put16(central, kAesMethod);
    put16(central, dos_time);
    put16(central, dos_date);
    put32(central, 0);
    put32(central, compressed_size);
    put32(central, real_size);
    put16(central, static_cast<std::uint16_t>(f.name.size()));
    put16(central, static_cast<std::uint16_t>(extra.size()));
    put16(central, 0);  // comment
    put16(central, 0);  // disk
    put16(central, 0);  // internal attributes
    put32(central, 0100600u << 16);
    put32(central, offset);
    put_string(central, f.name);
    put_bytes(central, extra);
    OPENSSL_cleanse(&keys, sizeof keys);
  }
  const auto cd_offset = static_cast<std::uint32_t>(out.size());
  put_bytes(out, central);
  put32(out, kEndSig);
  put16(out, 0);
  put16(out, 0);
  put16(out, static_cast<std::uint16_t>(spec.files.size()));
  put16(out, static_cast<std::uint16_t>(spec.files.size()));
  put32(out, static_cast<std::uint32_t>(central.size()));
  put32(out, cd_offset);
  put16(out, 0);
  return out;
}

std::vector<ExtractedFile> decrypt_archive(std::span<const std::uint8_t> archive, const std::string& password) {
  if (archive.size() < 22) fail(ErrorKind::integrity, "not a ZIP archive");
  // Locate the end-of-central-directory record (comment of up to 64 KiB).
  std::size_t eocd = std::string::npos;
  const std::size_t lowest = archive.size() > 22 + 0xFFFF ? archive.size() - 22 - 0xFFFF : 0;
  for (std::size_t i = archive.size() - 22 + 1; i-- > lowest;) {
    if (archive[i] == 0x50 && archive[i + 1] == 0x4b && archive[i + 2] == 0x05 && archive[i + 3] == 0x06) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string::npos) fail(ErrorKind::integrity, "not a ZIP archive");
  Reader r(archive);
  r.seek(eocd + 10);
  const std::uint16_t entries = r.u16();
  r.u32();  // central directory size
  const std::uint32_t cd_offset = r.u32();

  struct Entry {
    std::string name;
    std::uint32_t local_offset;
    std::uint32_t compressed;
    std::uint32_t uncompressed;
  };
  std::vector<Entry> list;
  r.seek(cd_offset);
  for (std::uint16_t i = 0; i < entries; ++i) {
    if (r.u32() != kCentralSig) fail(ErrorKind::integrity, "bad central directory");
    r.u16();
    r.u16();
    r.u16();
    const std::uint16_t method = r.u16();
    r.u32();
    r.u32();
    const std::uint32_t csize = r.u32();
    const std::uint32_t usize = r.u32();
    const std::uint16_t nlen = r.u16();
    const std::uint16_t xlen = r.u16();
    const std::uint16_t clen = r.u16();
    r.u16();
    r.u16();
    r.u32();
    const std::uint32_t off = r.u32();
    auto name = r.take(nlen);
    r.take(xlen);
    r.take(clen);
    if (method != kAesMethod) fail(ErrorKind::integrity, "entry is not AES encrypted");
    list.push_back({std::string(name.begin(), name.end()), off, csize, usize});
  }

  struct Pending {
    std::string name;
    Bytes payload;
    std::uint16_t method;
    std::uint32_t size;
    DerivedKeys keys;
  };
  std::vector<Pending> verified;
  for (const auto& e : list) {
    r.seek(e.local_offset);
    if (r.u32() != kLocalSig) fail(ErrorKind::integrity, "bad local header for '" + e.name + "'");
    r.u16();
    r.u16();
    if (r.u16() != kAesMethod) fail(ErrorKind::integrity, "entry is not AES encrypted");
    r.u16();
    r.u16();
    r.u32();
    r.u32();
    r.u32();
    const std::uint16_t nlen = r.u16();
    const std::uint16_t xlen = r.u16();
    r.take(nlen);
    Reader extra(r.take(xlen));
    std::optional<std::uint16_t> actual_method;
    std::uint8_t strength = 0;
    for (std::size_t consumed = 0; consumed + 4 <= xlen;) {
      const std::uint16_t id = extra.u16();
      const std::uint16_t size = extra.u16();
      const auto body = extra.take(size);
      consumed += 4u + size;
      if (id == kAesExtraId && size >= 7) {
        strength = body[4];
        actual_method = static_cast<std::uint16_t>(body[5] | (body[6] << 8));
      }
    }
    if (!actual_method || strength != 3) fail(ErrorKind::integrity, "entry '" + e.name + "' is not AES-256");
    if (e.compressed < kSaltLen + 2 + kMacLen) fail(ErrorKind::integrity, "entry '" + e.name + "' is truncated");
    const auto salt = r.take(kSaltLen);
    const auto verifier = r.take(2);
    const auto body = r.take(e.compressed - kSaltLen - 2 - kMacLen);
    const auto mac = r.take(kMacLen);
    DerivedKeys keys = derive(password, salt);
    if (CRYPTO_memcmp(keys.verifier.data(), verifier.data(), 2) != 0) {
      fail(ErrorKind::authentication, "wrong password");
    }
    const auto expected = mac_of(keys.mac, body);
    if (CRYPTO_memcmp(expected.data(), mac.data(), kMacLen) != 0) {
      // A wrong password passes the 2-byte verifier about once in 65536 tries.
      fail(ErrorKind::authentication, "authentication failed for '" + e.name + "' (wrong password or tampered data)");
    }
    verified.push_back({e.name, Bytes(body.begin(), body.end()), *actual_method, e.uncompressed, keys});
  }

  std::vector<ExtractedFile> out;
  for (auto& p : verified) {
    aes_ctr_xor(p.keys.enc, p.payload);
    OPENSSL_cleanse(&p.keys, sizeof p.keys);
    if (p.method == 8) {
      out.push_back({p.name, raw_inflate(p.payload, p.size)});
    } else if (p.method == 0) {
      if (p.payload.size() != p.size) fail(ErrorKind::integrity, "stored entry size mismatch");
      out.push_back({p.name, std::move(p.payload)});
    } else {
      fail(ErrorKind::integrity, "unsupported compression method " + std::to_string(p.method));
    }
  }
  return out;
}

DistributionReport build_distribution(store::RecordStore& store, const std::string& exam_id,
                                      const std::vector<ArchiveSpec>& students,
                                      const std::filesystem::path& out_dir, const PasswordPolicy& policy,
                                      const std::string& actor) {
  policy.validate();
  if (!safe_student_id(exam_id)) fail(ErrorKind::validation, "exam id '" + exam_id + "' is not usable as a directory");
  std::set<std::string> ids;
  for (const auto& s : students) {
    if (!safe_student_id(s.student_id)) fail(ErrorKind::validation, "invalid student id '" + s.student_id + "'");
    if (!ids.insert(s.student_id).second) fail(ErrorKind::validation, "duplicate student id '" + s.student_id + "'");
    if (s.files.empty()) fail(ErrorKind::validation, "student '" + s.student_id + "' has no files");
  }
  const auto dir = out_dir / exam_id;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());

  std::set<std::string> used;
  for (const auto& e : store.ledger(exam_id)) used.insert(e.password);

  DistributionReport report;
  for (const auto& s : students) {
    const auto path = dir / (s.student_id + ".zip");
    const auto existing = store.ledger_entry(exam_id, s.student_id);
    if (existing && std::filesystem::exists(path)) {
      report.skipped.push_back(s.student_id);
      continue;
    }
    try {
      std::string password;
      do {
        password = generate_password(policy);
      } while (used.count(password) != 0);
      const Bytes archive = encrypt_archive(s, password, store.clock().now());
      write_file_atomic(path, archive);
      PasswordLedgerEntry entry{s.student_id, exam_id, path.string(), password, store.clock().now(), false};
      store.record_ledger_entry(entry, {actor, AuditAction::distribution_entry_recorded, s.student_id,
                                        "archive " + path.string()});
      if (existing) used.erase(existing->password);
      used.insert(password);
      report.built.push_back(s.student_id);
    } catch (const Error& e) {
      std::filesystem::remove(path, ec);
      report.failures.emplace_back(s.student_id, e.what());
    }
  }
  return report;
}

void write_ledger_csv(const store::RecordStore& store, const std::string& exam_id, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"student_id", "archive_path", "password"});
  for (const auto& e : store.ledger(exam_id)) w.row({e.student_id, e.archive_path, e.password});
  const std::string& text = w.str();
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
  if (fd < 0) fail(ErrorKind::io, "cannot create ledger " + path.string());
  ::fchmod(fd, 0600);
  std::size_t off = 0;
  while (off < text.size()) {
    const auto n = ::write(fd, text.data() + off, text.size() - off);
    if (n <= 0) {
      ::close(fd);
      fail(ErrorKind::io, "cannot write ledger " + path.string());
    }
    off += static_cast<std::size_t>(n);
  }
  if (::close(fd) != 0) fail(ErrorKind::io, "cannot write ledger " + path.string());
}

}  // namespace aipat::dist
