// Built-in program roster. Addresses derive from the program name, so every
// chain (and every replay) resolves the same routine for the same account.
#pragma once

#include "ephemera/chain/chain.h"
#include "ephemera/ecs/schema.h"

namespace ephemera {

class DelegationProgram;

// Standard component schemas shared by the bundled programs and scenarios.
const ComponentSchema& position_schema();  // x, y, z: f64
const ComponentSchema& energy_schema();    // value: u64 (unit "points")
const ComponentSchema& chest_schema();     // tokens: u64
const ComponentSchema& flag_schema();      // passed: bool

// system: native balance transfer.
// payload: amount u64. metas: [from writable, to writable]; from must be owned
// by the system program and is usually also the fee payer.
Address register_system_program(Chain& chain);
Bytes transfer_payload(std::uint64_t amount);

// movement: applies a delta to every writable position component among the
// metas. payload: dx, dy, dz f64. Fails when no position component is present.
Address register_movement_program(Chain& chain);
Bytes movement_payload(double dx, double dy, double dz);

// reward: mints tokens into a chest component when the (readonly) position
// component sits within radius of the target. payload: x, y, z, radius f64,
// amount u64. Fails with "not-at-target" otherwise.
Address register_reward_program(Chain& chain);
Bytes reward_payload(double x, double y, double z, double radius, std::uint64_t amount);

// energy_tick: +1 to every writable energy component among the metas; other
// accounts pass through untouched. payload ignored.
Address register_energy_tick_program(Chain& chain);

// physics_step: like movement but tolerant of non-position metas, meant to run
// from rollup ticks. payload: dx, dy, dz f64 per step.
Address register_physics_step_program(Chain& chain);
Bytes physics_payload(double dx, double dy, double dz);

// leaderboard: reads a threshold account (owned by this program, data u64 LE)
// and an energy component, writes a flag component: passed = energy >= threshold.
// metas: [threshold readonly, energy readonly, flag writable, ...].
Address register_leaderboard_program(Chain& chain);

// Registers the full roster plus the world, registry and delegation programs.
void register_standard_programs(Chain& base, DelegationProgram* dlp);

}  // namespace ephemera
