//! End-to-end sample-domain link: modulate, impair, propagate, receive.

use crate::channel::{apply_channel_with_noise, CirTable};
use crate::error::{check_len, Result};
use crate::framing::{add_cp, ds_to_time, time_to_ds, DsGrid, FrameGeometry};
use crate::impairments::{rx_impair, sto_resample, tx_impair, HwiScenario, ImpairmentRealization};
use crate::C64;

#[derive(Debug, Clone)]
pub struct LinkOutput {
    /// Transmitted samples after the Tx impairments (with CP).
    pub tx: Vec<C64>,
    /// Received samples after the Rx impairments and resampling (with CP).
    pub rx: Vec<C64>,
    /// Delay-sequency output, length NM.
    pub y: Vec<C64>,
}

/// Runs one frame through the full chain with caller-supplied noise `w`
/// (length NM + l_max).
pub fn transceive(
    x: &DsGrid,
    cir: &CirTable,
    sc: &HwiScenario,
    re: &ImpairmentRealization,
    w: &[C64],
) -> Result<LinkOutput> {
    let g: &FrameGeometry = x.geometry();
    check_len(g.len_cp(), w.len())?;
    let s = add_cp(&ds_to_time(x.as_slice(), g)?, g.l_max);
    let tx = tx_impair(&s, sc, re)?;
    let r = apply_channel_with_noise(&tx, cir, w)?;
    let rx = sto_resample(&rx_impair(&r, sc, re)?, re)?;
    let y = time_to_ds(&rx[g.l_max..], g)?;
    Ok(LinkOutput { tx, rx, y })
}
