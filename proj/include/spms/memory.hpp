#pragma once
// Simulated block-structured heap: a flat word-addressed space carved into
// cache blocks, with an allocation registry, block-aligned zero-initialized
// allocations, reuse with per-block incarnation counters, and access-rule
// enforcement for two-phase gap-padded ("buffered") arrays.

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "spms/common.hpp"

namespace spms {

// First-fit free list over whole-block regions, lowest base first, adjacent
// regions coalesced on release. Shared by the execution's serial heap
// allocator and the scheduled replay's per-task arenas, which must reproduce
// the serial placement exactly when there are no steals. All quantities are
// in block units.
class BlockPool {
 public:
  // Base of the lowest-addressed free region holding `blocks`, carving it
  // from the region's front; kNoAddr if none fits.
  u64 take(u64 blocks);
  void put(u64 base, u64 blocks);
  bool empty() const { return free_.empty(); }

 private:
  std::map<u64, u64> free_;  // base block -> region length in blocks
};

// Execution stacks live in a disjoint address range above the heap so heap
// and stack blocks can never alias.
inline constexpr u64 kStackBase = u64{1} << 40;

struct CacheConfig {
  u64 m_words = u64{1} << 14;  // cache capacity in words
  u64 b_words = 64;            // block size in words

  void validate() const {
    SPMS_CHECK(is_pow2(m_words) && is_pow2(b_words), "cache sizes must be powers of two");
    SPMS_CHECK(m_words >= b_words * b_words, "cache capacity below B^2 words");
  }
  u64 blocks() const { return m_words / b_words; }
};

enum class AllocClass : u8 { Plain, Buffered, Scratch };

// View of (part of) a live allocation. `base` is an absolute word address.
struct ArrRef {
  u32 id = kNoNode;
  u64 base = 0;
  u64 len = 0;

  bool valid() const { return id != kNoNode; }
  ArrRef slice(u64 off, u64 n) const {
    SPMS_CHECK(off + n <= len, "slice out of range");
    return ArrRef{id, base + off, n};
  }
};

struct Allocation {
  u64 base = 0;        // block-aligned
  u64 words = 0;       // requested length (underlying, incl. gaps if buffered)
  u64 blocks = 0;      // footprint in blocks
  AllocClass cls = AllocClass::Plain;
  bool live = false;
  // Buffered-array state: core words sit in [base+q, base+q+core_len).
  u64 q = 0;
  u64 core_len = 0;
  u8 phase = 1;
  std::vector<u8> write_counts;  // per core word, phase 1 only
};

struct AllocEvent {
  u64 pos = 0;      // dag node index at/after which the event happened
  u32 alloc = 0;
  u64 base = 0;
  u64 blocks = 0;
  bool acquire = true;
};

class SimMemory {
 public:
  explicit SimMemory(CacheConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    b_shift_ = ilog2(cfg_.b_words);
    checked_.fill(kNoAddr);
  }

  // Allocate `words` (rounded up to whole blocks, zero-initialized) at a fresh
  // block-aligned base, or at `reuse_base` (a previously released region of
  // sufficient block count) if given. For Buffered, `words` is the underlying
  // length and `q`/`core_len` describe the gap layout.
  u32 acquire(u64 words, AllocClass cls, u64 q, u64 core_len, u64 reuse_base, u64 pos);
  void release(u32 id, u64 pos);

  const Allocation& info(u32 id) const { return allocs_.at(id); }
  u64 alloc_count() const { return allocs_.size(); }
  u64 block_of(u64 addr) const { return addr >> b_shift_; }

  // Traced accesses: bounds/liveness checked and access rules enforced.
  Word read(u64 addr);
  void write(u64 addr, Word v);

  // Untraced accesses for setup and result extraction; bounds-checked only.
  Word peek(u64 addr) const;
  void poke(u64 addr, Word v);

  void set_read_phase(u32 id);

  u32 owner_of(u64 addr) const;                // alloc id or kNoNode
  u32 block_incarnation(u64 blk) const;
  const std::vector<AllocEvent>& alloc_events() const { return events_; }
  const std::vector<std::string>& audit_violations() const { return violations_; }

  u64 live_blocks() const { return live_blocks_; }
  u64 peak_live_blocks() const { return peak_live_blocks_; }
  u64 distinct_touched_blocks() const { return distinct_touched_; }
  u64 heap_top() const { return top_; }
  const CacheConfig& config() const { return cfg_; }

 private:
  void check_access(u64 addr, bool is_write);
  void check_access_slow(u64 addr, bool is_write, u64 blk);
  void note_touch(u64 blk);

  // A block whose every word sits inside a live non-buffered allocation needs
  // no per-word re-validation until that region's ownership changes, so full
  // checks stamp a verdict here and repeat accesses take one table probe.
  // Acquiring or releasing a region voids the verdicts of exactly its blocks.
  // Buffered allocations never receive verdicts (their rules are per-access),
  // so phase flips need no invalidation.
  static constexpr u64 kCheckedSlots = 64;
  std::array<u64, kCheckedSlots> checked_;
  void invalidate_checked(u64 first_blk, u64 blocks);

  CacheConfig cfg_;
  u64 b_shift_ = 0;  // log2(b_words); block sizes are powers of two
  std::vector<Word> words_;
  std::vector<u32> block_owner_;        // per block: current alloc id
  std::vector<u32> block_incarnation_;  // per block: bumped on each acquire
  std::vector<u8> block_touched_;
  std::vector<Allocation> allocs_;
  std::vector<AllocEvent> events_;
  std::vector<std::string> violations_;
  u64 top_ = 0;  // bump pointer, block-aligned
  u64 live_blocks_ = 0;
  u64 peak_live_blocks_ = 0;
  u64 distinct_touched_ = 0;
};

}  // namespace spms
