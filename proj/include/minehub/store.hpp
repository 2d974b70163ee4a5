#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "minehub/schema.hpp"

namespace minehub {

using Document = nlohmann::json;

enum class Compare { eq, ne, lt, le, gt, ge };

struct Condition {
  std::string field;
  Compare op = Compare::eq;
  Document value;
};

/// Conjunction of field comparisons plus an ordering. Results are always
/// ordered by `order` first and the natural key second.
struct Query {
  std::vector<Condition> conditions;
  std::vector<std::string> order;

  Query &where(std::string field, Compare op, Document value) {
    conditions.push_back({std::move(field), op, std::move(value)});
    return *this;
  }
  Query &eq(std::string field, Document value) {
    return where(std::move(field), Compare::eq, std::move(value));
  }
  Query &order_by(std::string field) {
    order.push_back(std::move(field));
    return *this;
  }
};

/// Raw persistence for one document log per collection.
class StorageEngine {
public:
  virtual ~StorageEngine() = default;

  /// Every line ever appended (or rewritten) for the collection, in order.
  virtual std::vector<std::string> load(std::string_view collection) = 0;
  virtual void append(std::string_view collection, std::string_view line) = 0;
  virtual void rewrite(std::string_view collection, const std::vector<std::string> &lines) = 0;
  virtual void write_schema(std::string_view text) = 0;
  virtual std::filesystem::path location() const { return {}; }
};

/// `<datadir>/<collection>.ndjson`, one document per '\n'-terminated line.
class NdjsonEngine final : public StorageEngine {
public:
  explicit NdjsonEngine(std::filesystem::path datadir);

  std::vector<std::string> load(std::string_view collection) override;
  void append(std::string_view collection, std::string_view line) override;
  void rewrite(std::string_view collection, const std::vector<std::string> &lines) override;
  void write_schema(std::string_view text) override;
  std::filesystem::path location() const override { return datadir_; }

private:
  std::filesystem::path path_for(std::string_view collection) const;

  std::filesystem::path datadir_;
  std::mutex files_mutex_;
  std::map<std::string, std::unique_ptr<std::FILE, int (*)(std::FILE *)>, std::less<>> files_;
};

class MemoryEngine final : public StorageEngine {
public:
  std::vector<std::string> load(std::string_view collection) override;
  void append(std::string_view collection, std::string_view line) override;
  void rewrite(std::string_view collection, const std::vector<std::string> &lines) override;
  void write_schema(std::string_view text) override { schema_ = std::string(text); }

private:
  std::mutex mutex_;
  std::map<std::string, std::vector<std::string>, std::less<>> logs_;
  std::string schema_;
};

struct UpsertOptions {
  /// Only the validation service sets this; it lifts write protection.
  bool validation_write = false;
};

/// Document store over the harmonized schema. Documents are identified by a
/// deterministic digest of their collection's natural key, so re-inserting
/// the same record is a no-op. Readers run concurrently; writers are
/// serialized per collection.
class Store {
public:
  explicit Store(const std::filesystem::path &datadir);
  explicit Store(std::unique_ptr<StorageEngine> engine);
  ~Store();

  Store(const Store &) = delete;
  Store &operator=(const Store &) = delete;

  std::string upsert(std::string_view collection, Document doc, UpsertOptions options = {});

  /// Read-modify-write under the collection's write lock. `fn` returns false
  /// to abandon the change. Natural key fields must not be altered.
  std::optional<Document> modify(std::string_view collection, std::string_view id,
                                 const std::function<bool(Document &)> &fn,
                                 UpsertOptions options = {});

  std::optional<Document> get(std::string_view collection, std::string_view id) const;
  std::vector<Document> query(std::string_view collection, const Query &q = {}) const;
  std::size_t count(std::string_view collection, const Query &q = {}) const;
  std::optional<Document> find_one(std::string_view collection, const Query &q) const;
  bool remove(std::string_view collection, std::string_view id);

  /// Rewrites every log with exactly one line per live document, ordered by
  /// natural key. Runs automatically on destruction.
  void compact();

  const std::filesystem::path &datadir() const { return datadir_; }

private:
  struct CollectionState {
    mutable std::shared_mutex mutex;
    std::unordered_map<std::string, Document> docs;
    bool dirty = false;
  };

  CollectionState &state(std::string_view collection) const;
  void load_all();
  void persist(std::string_view collection, CollectionState &st, const Document &doc);

  std::unique_ptr<StorageEngine> engine_;
  std::filesystem::path datadir_;
  std::map<std::string, std::unique_ptr<CollectionState>, std::less<>> collections_;
};

/// Deterministic id of `doc` within `collection`, derived from its natural
/// key. Throws missing-natural-key when a key field is absent.
std::string make_id(std::string_view collection, const Document &doc);

/// Natural key values of `doc` as a JSON array (the ordering tiebreak).
Document natural_key_of(const CollectionSpec &spec, const Document &doc);

/// Throws schema-violation on type errors, unknown fields or missing
/// required fields.
void validate_document(const CollectionSpec &spec, const Document &doc);

} // namespace minehub
