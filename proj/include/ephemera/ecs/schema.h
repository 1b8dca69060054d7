// Component schemas: named, typed field layouts with a content-derived id.
// The id doubles as the PDA seed for component accounts, so two worlds using
// the same schema derive different accounts only through world and entity ids.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ephemera/core/bytes.h"

namespace ephemera {

enum class ScalarType : std::uint8_t {
  i64 = 0,
  u64 = 1,
  f64 = 2,
  boolean = 3,
  bytes = 4,
};

const char* to_string(ScalarType type);
std::optional<ScalarType> scalar_type_from(const std::string& token);

struct FieldDef {
  std::string name;
  ScalarType type = ScalarType::i64;
  std::string unit;             // free-form annotation, part of the schema id
  std::uint16_t byte_size = 0;  // ScalarType::bytes only

  bool operator==(const FieldDef&) const = default;
};

struct ComponentSchema {
  std::string name;
  std::vector<FieldDef> fields;

  // u8 name length || name || u16 field count || per field:
  // u8 name length || name || u8 type || u8 unit length || unit || (u16 size for bytes).
  Bytes layout_encoding() const;
  Hash32 id() const;  // sha256 of the layout encoding
  std::size_t value_size() const;

  bool operator==(const ComponentSchema&) const = default;
};

using FieldValue = std::variant<std::int64_t, std::uint64_t, double, bool, Bytes>;
using FieldValues = std::vector<FieldValue>;

// Component account data: schema id (32) || entity id u64 LE || field values.
// Encoding throws std::invalid_argument("field-count" / "type-mismatch" /
// "byte-width") when the values do not fit the schema.
Bytes encode_component_data(const ComponentSchema& schema, std::uint64_t entity_id,
                            const FieldValues& values);

struct ComponentView {
  Hash32 schema_id;
  std::uint64_t entity_id = 0;
  Bytes value_bytes;
};

// Splits component data without needing the schema (the prefix is self-describing).
std::optional<ComponentView> split_component_data(std::span<const std::uint8_t> data);
std::optional<FieldValues> decode_component_values(const ComponentSchema& schema,
                                                   std::span<const std::uint8_t> value_bytes);

struct SchemaParse {
  std::vector<ComponentSchema> schemas;
  std::string error;  // empty on success, "<line>: <reason>" otherwise

  bool ok() const { return error.empty(); }
};

// Parses the declarative schema text format:
//   component position
//   field x f64 meters
//   field tag bytes:8
SchemaParse parse_schema_source(const std::string& source);

class SchemaStore {
 public:
  // Returns false when a schema with the same name but different layout exists.
  bool add(const ComponentSchema& schema);
  const ComponentSchema* find_by_name(const std::string& name) const;
  const ComponentSchema* find_by_id(const Hash32& id) const;
  std::size_t size() const { return by_id_.size(); }

 private:
  std::map<std::string, Hash32> by_name_;
  std::map<Hash32, ComponentSchema> by_id_;
};

}  // namespace ephemera
