// Durable record of a rollup session: baseline, every log segment with its
// clones and transactions, and the claimed commits. One JSON object per line;
// enough to re-execute the whole session from scratch.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "ephemera/er/rollup.h"

namespace ephemera {

struct SessionArchive {
  std::uint64_t er_id = 0;
  ERConfig config;
  std::uint64_t created_at_ms = 0;
  TransactionLog log;
  std::vector<CommitRecord> commits;
};

SessionArchive snapshot_session(const ErRuntime& runtime);
void write_session_archive(std::ostream& out, const SessionArchive& archive);
std::optional<SessionArchive> read_session_archive(std::istream& in, std::string* error);

}  // namespace ephemera
