//! Seeded Rayleigh-fading channel generation with distance-based path loss,
//! plus a bit-exact binary file format for persisting realizations.
//!
//! Generation is a pure function of `(scenario, seed)`. The generator is
//! ChaCha8 (counter-based, platform-independent) seeded directly from the
//! 64-bit seed; complex Gaussians come from Box-Muller pairs so no platform
//! -dependent sampling code is involved. Draw order is fixed: the BS-IRS
//! matrix row-major, then the IRS-user vector, then the BS-user vector.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{ChannelSet, Scenario};
use crate::{C64, CMatrix, CVector};

/// Magic bytes of the channel file format.
pub const CHANNEL_MAGIC: &[u8; 8] = b"AIRSCH01";

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a channel file (bad magic bytes)")]
    BadMagic,
    #[error("channel file truncated or corrupted: {0}")]
    Corrupted(String),
    #[error("channel file dimensions ({n} x {m}) do not match scenario ({expect_n} x {expect_m})")]
    DimensionMismatch {
        n: usize,
        m: usize,
        expect_n: usize,
        expect_m: usize,
    },
    #[error("channel file was generated for a different scenario (digest mismatch)")]
    ScenarioMismatch,
}

/// Linear power gain of a link: `10^(pl0_db/10) * d^(-alpha)`.
pub fn path_gain(distance_m: f64, alpha: f64, pl0_db: f64) -> Result<f64, ChannelError> {
    if !(distance_m > 0.0) {
        return Err(ChannelError::NonPositiveDistance(distance_m));
    }
    Ok(10f64.powf(pl0_db / 10.0) * distance_m.powf(-alpha))
}

/// One circularly-symmetric complex Gaussian with variance `variance`,
/// via a Box-Muller pair.
fn complex_gaussian(rng: &mut ChaCha8Rng, variance: f64) -> C64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = 2.0 * std::f64::consts::PI * u2;
    let scale = (variance / 2.0).sqrt();
    C64::new(radius * angle.cos() * scale, radius * angle.sin() * scale)
}

/// Draws one Rayleigh channel realization for the scenario. Each entry is
/// i.i.d. CN(0, g) where g is the link's path gain.
pub fn generate(scn: &Scenario, seed: u64) -> ChannelSet {
    let d = scn.distances();
    let gain_bi = path_gain(d.bs_irs, scn.alpha_bi, scn.pl0_db).expect("positive distance");
    let gain_iu = path_gain(d.irs_user, scn.alpha_iu, scn.pl0_db).expect("positive distance");
    let gain_bu = path_gain(d.bs_user, scn.alpha_bu, scn.pl0_db).expect("positive distance");

    let (n, m) = (scn.n_elements, scn.m_antennas);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Row-major draw order for the matrix; nalgebra stores column-major, so
    // fill a buffer first.
    let mut g_rows = vec![C64::new(0.0, 0.0); n * m];
    for row in 0..n {
        for col in 0..m {
            g_rows[row * m + col] = complex_gaussian(&mut rng, gain_bi);
        }
    }
    let bs_irs = CMatrix::from_fn(n, m, |r, c| g_rows[r * m + c]);
    let irs_user = CVector::from_fn(n, |_, _| complex_gaussian(&mut rng, gain_iu));
    let bs_user = CVector::from_fn(m, |_, _| complex_gaussian(&mut rng, gain_bu));
    ChannelSet {
        bs_irs,
        irs_user,
        bs_user,
    }
}

/// Writes a channel realization: magic, u32 N, u32 M, u64 seed, 32-byte
/// scenario digest, then doubles re/im interleaved (G row-major, f, h),
/// all little-endian.
pub fn save(
    ch: &ChannelSet,
    scn: &Scenario,
    seed: u64,
    path: &Path,
) -> Result<(), ChannelError> {
    ch.check_dims(scn)
        .map_err(|e| ChannelError::Corrupted(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHANNEL_MAGIC)?;
    w.write_all(&(scn.n_elements as u32).to_le_bytes())?;
    w.write_all(&(scn.m_antennas as u32).to_le_bytes())?;
    w.write_all(&seed.to_le_bytes())?;
    w.write_all(&scn.digest())?;
    let mut put = |c: &C64| -> Result<(), ChannelError> {
        w.write_all(&c.re.to_le_bytes())?;
        w.write_all(&c.im.to_le_bytes())?;
        Ok(())
    };
    for row in 0..scn.n_elements {
        for col in 0..scn.m_antennas {
            put(&ch.bs_irs[(row, col)])?;
        }
    }
    for c in ch.irs_user.iter() {
        put(c)?;
    }
    for c in ch.bs_user.iter() {
        put(c)?;
    }
    Ok(())
}

/// Loads a channel realization, verifying magic, dimensions, and the scenario
/// digest. Returns the stored seed alongside the channels.
pub fn load(path: &Path, scn: &Scenario) -> Result<(ChannelSet, u64), ChannelError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| ChannelError::Corrupted("file shorter than header".into()))?;
    if &magic != CHANNEL_MAGIC {
        return Err(ChannelError::BadMagic);
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| ChannelError::Corrupted("missing element count".into()))?;
    let n = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)
        .map_err(|_| ChannelError::Corrupted("missing antenna count".into()))?;
    let m = u32::from_le_bytes(buf4) as usize;
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)
        .map_err(|_| ChannelError::Corrupted("missing seed".into()))?;
    let seed = u64::from_le_bytes(buf8);
    let mut digest = [0u8; 32];
    r.read_exact(&mut digest)
        .map_err(|_| ChannelError::Corrupted("missing scenario digest".into()))?;

    if n != scn.n_elements || m != scn.m_antennas {
        return Err(ChannelError::DimensionMismatch {
            n,
            m,
            expect_n: scn.n_elements,
            expect_m: scn.m_antennas,
        });
    }
    if digest != scn.digest() {
        return Err(ChannelError::ScenarioMismatch);
    }

    let mut next = |what: &str| -> Result<C64, ChannelError> {
        let mut re = [0u8; 8];
        let mut im = [0u8; 8];
        r.read_exact(&mut re)
            .and_then(|_| r.read_exact(&mut im))
            .map_err(|_| ChannelError::Corrupted(format!("payload truncated in {what}")))?;
        Ok(C64::new(f64::from_le_bytes(re), f64::from_le_bytes(im)))
    };
    let mut g_rows = vec![C64::new(0.0, 0.0); n * m];
    for entry in g_rows.iter_mut() {
        *entry = next("bs_irs matrix")?;
    }
    let bs_irs = CMatrix::from_fn(n, m, |row, col| g_rows[row * m + col]);
    let mut irs_user = CVector::zeros(n);
    for i in 0..n {
        irs_user[i] = next("irs_user vector")?;
    }
    let mut bs_user = CVector::zeros(m);
    for i in 0..m {
        bs_user[i] = next("bs_user vector")?;
    }
    Ok((
        ChannelSet {
            bs_irs,
            irs_user,
            bs_user,
        },
        seed,
    ))
}
