#pragma once

#include <functional>
#include <map>
#include <string>

#include "ephemera/core/bytes.h"
#include "ephemera/exec/transaction.h"

namespace ephemera {

class ProgramContext;

// Thrown by routines and account handles; turns into the transaction's
// terminal status with every staged effect rolled back (the fee stands).
struct RoutineError {
  TxStatus status = TxStatus::routine_failed;
  std::string detail;
};

using ProgramRoutine = std::function<void(ProgramContext&)>;

class ProgramRegistry {
 public:
  struct Entry {
    std::string name;
    ProgramRoutine routine;
  };

  // Returns the program address derived from the name.
  // Throws std::runtime_error("duplicate-program") if name or address is taken.
  Address add(const std::string& name, ProgramRoutine routine);
  const Entry* find(const Address& address) const;
  const Address* find_by_name(const std::string& name) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<Address, Entry> entries_;
  std::map<std::string, Address> by_name_;
};

}  // namespace ephemera
