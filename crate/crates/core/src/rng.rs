//! Deterministic splittable random streams for the simulation harness.
//!
//! Each (master seed, replication index, role) triple maps to an independent
//! xoshiro256** stream seeded through a splitmix64 chain, so replications can
//! be executed in any order or degree of parallelism without changing a
//! single draw.

#[derive(Clone, Copy)]
struct Splitmix64(u64);

impl Splitmix64 {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Stream roles keep the signal and noise draws of one replication
/// decoupled from each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Signal,
    Noise,
    Auxiliary,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Signal => 0x5149,
            StreamRole::Noise => 0x4e4f,
            StreamRole::Auxiliary => 0x4155,
        }
    }
}

/// xoshiro256** generator with Box-Muller normal sampling.
#[derive(Debug, Clone)]
pub struct RngStream {
    s: [u64; 4],
    spare_normal: Option<f64>,
}

impl RngStream {
    /// Derive the stream for (master seed, replication, role). The chain of
    /// splitmix states makes distinct triples yield unrelated streams.
    pub fn derive(master_seed: u64, replication: u64, role: StreamRole) -> Self {
        let mut a = Splitmix64(master_seed);
        let h1 = a.next();
        let mut b = Splitmix64(h1 ^ replication.wrapping_mul(0xd6e8_feb8_6659_fd93));
        let h2 = b.next();
        let mut c = Splitmix64(h2 ^ role.tag().wrapping_mul(0xca5a_8268_59a6_82bd));
        let mut s = [c.next(), c.next(), c.next(), c.next()];
        if s == [0, 0, 0, 0] {
            s = [1, 2, 3, 4];
        }
        Self {
            s,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1), safe as a Box-Muller log argument.
    fn open_uniform(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Standard normal draw (Box-Muller, the second value is cached).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.open_uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
