#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nbmig/cellparse.hpp"
#include "nbmig/trace.hpp"

namespace nbmig::state {

using ObjectId = std::string;

enum class ObjectKind : std::uint8_t { Variable, Function, Module };
std::string_view to_string(ObjectKind kind) noexcept;
std::optional<ObjectKind> parse_object_kind(std::string_view name) noexcept;

struct NamespaceObject {
  ObjectId id;
  // Top-level name, or empty for objects only reachable through references.
  std::string name;
  ObjectKind kind = ObjectKind::Variable;
  // Bytes; always 0 for modules, which travel as name-only markers.
  std::uint64_t payload_size = 0;
  std::vector<ObjectId> references;
  bool hashable = true;
  // Present iff hashable. See content_hash_of().
  std::optional<std::uint64_t> content_hash;
  bool serializable = true;
  // Names a function body reads from the global namespace.
  std::set<std::string> free_names;
  // Representative content; the serialized form repeats it up to payload_size.
  std::string content;

  bool operator==(const NamespaceObject&) const = default;
};

// Digest of kind, size, content and references. Whole-object granularity: any change
// to a container's element shows up as a change to the container.
std::uint64_t content_hash_of(const NamespaceObject& object);

// Recomputes content_hash from the other fields (or clears it when unhashable).
void rehash(NamespaceObject& object);

struct NotebookState {
  std::map<ObjectId, NamespaceObject> objects;
  std::map<std::string, ObjectId> bindings;
  std::uint64_t generation = 0;

  std::uint64_t total_bytes() const;
  bool operator==(const NotebookState&) const = default;
};

// Throws Error(InvalidState) on dangling references or bindings, or when
// content_hash presence disagrees with hashable.
void validate(const NotebookState& state);

// Fixture format: {"objects":[{id,name,kind,size,refs,hashable,serializable,content,
// free_names}], "bindings":{name:id}, "generation":n}. Hashes are computed on load.
NotebookState state_from_json(std::string_view text);
std::string state_to_json(const NotebookState& state, int indent = -1);

struct Closure {
  std::set<ObjectId> ids;
  // Names the cell reads that have no binding (builtins or genuinely undefined).
  std::set<std::string> missing_names;
};

// Objects the cell's execution depends on: bindings of the cell's required names,
// then references and function free names, transitively. Terminates on cycles.
Closure needed_closure(const NotebookState& state, const cell::NameUsage& usage);

enum class Direction : std::uint8_t { LocalToRemote, RemoteToLocal };
std::string_view to_string(Direction direction) noexcept;

enum class PayloadMode : std::uint8_t { FullReduced, Diff };
std::string_view to_string(PayloadMode mode) noexcept;

struct MigrationPayload {
  Direction direction = Direction::LocalToRemote;
  PayloadMode mode = PayloadMode::FullReduced;
  std::set<ObjectId> included;
  std::uint64_t total_bytes = 0;  // before compression
  bool compressed = false;
  std::optional<std::uint64_t> compressed_bytes;
  std::set<std::string> missing_names;

  bool operator==(const MigrationPayload&) const = default;
};

// Some needed object cannot be serialized, so the cell has to run locally.
struct LocalFallback {
  std::set<ObjectId> offending;
};

using ReduceResult = std::variant<MigrationPayload, LocalFallback>;

// Builds the payload from the state without touching it. Throws Error(InvalidArgument)
// when `needed` names an object the state does not hold.
ReduceResult reduce_and_serialize(const NotebookState& state, const std::set<ObjectId>& needed,
                                  bool compress, Direction direction = Direction::LocalToRemote);

// Closure plus reduction in one step; the payload records the missing names.
ReduceResult reduce_for_cell(const NotebookState& state, const cell::NameUsage& usage, bool compress,
                             Direction direction = Direction::LocalToRemote);

// New objects, objects whose hash changed, and every unhashable object of `after`.
MigrationPayload diff_payload(const NotebookState& before, const NotebookState& after,
                              Direction direction, bool compress = false);

// latency + bytes / bandwidth, plus compression and decompression time when the
// payload is compressed and a codec rate is given. Units: bytes, ms, bytes per ms.
// Throws Error(InvalidBandwidth) when bandwidth <= 0.
Millis migration_time(const MigrationPayload& payload, double bandwidth, Millis latency,
                      std::optional<double> codec_rate = std::nullopt);

// Restriction of the state to `ids`; bindings pointing outside are dropped.
NotebookState subgraph(const NotebookState& state, const std::set<ObjectId>& ids);

// Copies the payload's objects from `source` into `target`, then rebinds every name of
// `source` whose object is present in `target`.
void apply_payload(NotebookState& target, const NotebookState& source, const MigrationPayload& payload);

// {direction, mode, included, total_bytes, compressed_bytes, missing_names}.
std::string manifest_json(const MigrationPayload& payload, int indent = 2);

// Deflated size of the payload's canonical byte stream.
std::uint64_t compressed_size(const NotebookState& state, const std::set<ObjectId>& ids);

}  // namespace nbmig::state
