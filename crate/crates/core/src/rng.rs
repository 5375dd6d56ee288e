//! Counter-based random streams.
//!
//! Every draw is a pure function of `(seed, replica, domain, stream, index)`,
//! computed with the Philox4x32-10 block function. A simulation step asks for
//! the stream of its own step number, so results never depend on how replicas
//! are scheduled across threads.

use rand::RngCore;

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 block function with 10 rounds.
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(W0);
            key[1] = key[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, ctr[0]);
        let (hi1, lo1) = mulhilo(M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0];
    }
    ctr
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent purposes that draw randomness within one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Per-step increments of the walk.
    Walk = 1,
    /// Bernoulli splitting coins, one per block.
    Coin = 2,
    /// Block proposals of the split sampler.
    Block = 3,
    /// Idealised angle chain.
    Chain = 4,
    /// Test and tooling draws.
    Aux = 5,
}

/// A keyed family of streams for one `(seed, replica, domain)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u32; 2]);

impl StreamKey {
    pub fn new(seed: u64, replica: u64, domain: Domain) -> Self {
        let h = splitmix64(splitmix64(splitmix64(seed) ^ replica) ^ (domain as u64));
        StreamKey([h as u32, (h >> 32) as u32])
    }

    /// The generator for stream number `stream` (e.g. a step or block index).
    pub fn stream(&self, stream: u64) -> CounterRng {
        CounterRng {
            key: self.0,
            stream,
            block: 0,
            buf: [0; 4],
            idx: 4,
        }
    }
}

/// Sequential view over one Philox stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: [u32; 2],
    stream: u64,
    block: u64,
    buf: [u32; 4],
    idx: usize,
}

impl CounterRng {
    /// Convenience constructor for tests and one-off streams.
    pub fn seeded(seed: u64, replica: u64, domain: Domain, stream: u64) -> Self {
        StreamKey::new(seed, replica, domain).stream(stream)
    }

    fn refill(&mut self) {
        let ctr = [
            self.block as u32,
            (self.block >> 32) as u32,
            self.stream as u32,
            (self.stream >> 32) as u32,
        ];
        self.buf = philox4x32_10(ctr, self.key);
        self.block = self.block.wrapping_add(1);
        self.idx = 0;
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.idx >= 4 {
            self.refill();
        }
        let v = self.buf[self.idx];
        self.idx += 1;
        v
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(4) {
            let b = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&b[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
