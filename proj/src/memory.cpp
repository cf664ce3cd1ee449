#include "spms/memory.hpp"

#include <algorithm>

namespace spms {

u64 BlockPool::take(u64 blocks) {
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    if (it->second >= blocks) {
      const u64 base = it->first;
      const u64 rest = it->second - blocks;
      free_.erase(it);
      if (rest) free_.emplace(base + blocks, rest);
      return base;
    }
  }
  return kNoAddr;
}

void BlockPool::put(u64 base, u64 blocks) {
  auto [it, inserted] = free_.emplace(base, blocks);
  SPMS_CHECK(inserted, "double release into the free pool");
  // coalesce with the successor, then the predecessor
  auto nx = std::next(it);
  if (nx != free_.end() && it->first + it->second == nx->first) {
    it->second += nx->second;
    free_.erase(nx);
  }
  if (it != free_.begin()) {
    auto pv = std::prev(it);
    if (pv->first + pv->second == it->first) {
      pv->second += it->second;
      free_.erase(it);
    }
  }
}

u32 SimMemory::acquire(u64 words, AllocClass cls, u64 q, u64 core_len,
                       u64 reuse_base, u64 pos) {
  const u64 blocks = std::max<u64>(1, ceil_div(words, cfg_.b_words));
  u64 base;
  if (reuse_base == kNoAddr) {
    base = top_;
    top_ += blocks * cfg_.b_words;
    if (words_.size() < top_) {
      words_.resize(top_, 0);
      const u64 nblk = top_ / cfg_.b_words;
      block_owner_.resize(nblk, kNoNode);
      block_incarnation_.resize(nblk, 0);
      block_touched_.resize(nblk, 0);
    }
  } else {
    SPMS_CHECK(reuse_base % cfg_.b_words == 0 && reuse_base + blocks * cfg_.b_words <= top_,
               "bad reuse base");
    base = reuse_base;
    for (u64 b = base / cfg_.b_words; b < base / cfg_.b_words + blocks; ++b) {
      SPMS_CHECK(block_owner_[b] == kNoNode, "allocation overlaps a live region");
    }
  }

  const u32 id = static_cast<u32>(allocs_.size());
  Allocation a;
  a.base = base;
  a.words = words;
  a.blocks = blocks;
  a.cls = cls;
  a.live = true;
  a.q = q;
  a.core_len = core_len;
  if (cls == AllocClass::Buffered) {
    SPMS_CHECK(2 * q + core_len <= words, "buffered layout exceeds allocation");
    a.write_counts.assign(core_len, 0);
  }
  allocs_.push_back(std::move(a));

  const u64 b0 = base / cfg_.b_words;
  for (u64 b = b0; b < b0 + blocks; ++b) {
    SPMS_CHECK(block_owner_[b] == kNoNode, "allocation overlaps a live region");
    block_owner_[b] = id;
    block_incarnation_[b] += 1;
  }
  std::fill(words_.begin() + static_cast<std::ptrdiff_t>(base),
            words_.begin() + static_cast<std::ptrdiff_t>(base + blocks * cfg_.b_words), 0);
  live_blocks_ += blocks;
  peak_live_blocks_ = std::max(peak_live_blocks_, live_blocks_);
  events_.push_back({pos, id, base, blocks, true});
  ++epoch_;
  return id;
}

void SimMemory::release(u32 id, u64 pos) {
  Allocation& a = allocs_.at(id);
  SPMS_CHECK(a.live, "double free");
  a.live = false;
  const u64 b0 = a.base / cfg_.b_words;
  for (u64 b = b0; b < b0 + a.blocks; ++b) block_owner_[b] = kNoNode;
  live_blocks_ -= a.blocks;
  events_.push_back({pos, id, a.base, a.blocks, false});
  ++epoch_;
}

void SimMemory::note_touch(u64 blk) {
  if (!block_touched_[blk]) {
    block_touched_[blk] = 1;
    ++distinct_touched_;
  }
}

void SimMemory::check_access(u64 addr, bool is_write) {
  const u64 blk = addr >> b_shift_;
  const CheckedBlock& fe = checked_[blk & (kCheckedSlots - 1)];
  // A current verdict means the whole block is inside a live non-buffered
  // allocation, which also implies addr < top_.
  if (fe.blk == blk && fe.epoch == epoch_) return;
  check_access_slow(addr, is_write, blk);
}

void SimMemory::check_access_slow(u64 addr, bool is_write, u64 blk) {
  SPMS_CHECK(addr < top_, "access beyond heap");
  const u32 owner = block_owner_[blk];
  SPMS_CHECK(owner != kNoNode, "access to unallocated block");
  Allocation& a = allocs_[owner];
  SPMS_CHECK(addr >= a.base && addr < a.base + a.words, "access outside allocation words");
  if (a.cls == AllocClass::Buffered) {
    const u64 off = addr - a.base;
    const bool in_core = off >= a.q && off < a.q + a.core_len;
    if (a.phase == 1) {
      if (is_write && in_core) {
        if (++a.write_counts[off - a.q] > 4) {
          violations_.push_back("buffered: phase-1 write count exceeded at offset " +
                                std::to_string(off));
        }
      }
    } else {
      if (is_write) {
        violations_.push_back("buffered: write in read phase at offset " + std::to_string(off));
      }
      if (!in_core) {
        violations_.push_back("buffered: read-phase access to gap word at offset " +
                              std::to_string(off));
      }
    }
  }
  note_touch(blk);
  if (a.cls != AllocClass::Buffered && ((blk + 1) << b_shift_) <= a.base + a.words) {
    checked_[blk & (kCheckedSlots - 1)] = {blk, epoch_};
  }
}

Word SimMemory::read(u64 addr) {
  check_access(addr, false);
  return words_[addr];
}

void SimMemory::write(u64 addr, Word v) {
  check_access(addr, true);
  words_[addr] = v;
}

Word SimMemory::peek(u64 addr) const {
  SPMS_CHECK(addr < top_, "peek beyond heap");
  return words_[addr];
}

void SimMemory::poke(u64 addr, Word v) {
  SPMS_CHECK(addr < top_, "poke beyond heap");
  words_[addr] = v;
}

void SimMemory::set_read_phase(u32 id) {
  Allocation& a = allocs_.at(id);
  SPMS_CHECK(a.cls == AllocClass::Buffered, "read phase on non-buffered allocation");
  a.phase = 2;
  ++epoch_;
}

u32 SimMemory::owner_of(u64 addr) const {
  if (addr >= top_) return kNoNode;
  return block_owner_[addr >> b_shift_];
}

u32 SimMemory::block_incarnation(u64 blk) const {
  return blk < block_incarnation_.size() ? block_incarnation_[blk] : 0;
}

}  // namespace spms
