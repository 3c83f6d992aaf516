//! Published per-trait results of the original classroom experiment, used
//! for mock calibration and as reproduction targets.

use crate::analytics::ResponseTable;

/// Trials per experiment.
pub const TRIALS: u64 = 50;

/// Evaluation opportunities per trait: 50 trials x 9 foreign claims.
pub const OPPORTUNITIES: u64 = TRIALS * 9;

/// Rates quoted in the results prose, as fractions.
pub const PROSE_CURIOUS_SPEAK_ACCEPT: f64 = 0.926;
pub const PROSE_CRITICAL_SPEAK_REJECT: f64 = 0.90;
/// Quoted for cautious agents but not derivable from the table (223/227 is 0.982).
pub const PROSE_CAUTIOUS_SPEAK_REJECT: f64 = 0.978;

/// Speak Yes, Speak No, Think Yes, Think No, Diff, Total per trait.
pub fn table4() -> Vec<ResponseTable> {
    [
        ("curious", 100, 8, 79, 29, 35, 108),
        ("cautious", 4, 223, 2, 225, 6, 227),
        ("organized", 190, 140, 228, 102, 76, 330),
        ("careless", 14, 272, 118, 168, 130, 286),
        ("outgoing", 200, 97, 216, 81, 132, 297),
        ("reserved", 64, 157, 45, 176, 59, 221),
        ("friendly", 106, 152, 108, 150, 158, 258),
        ("critical", 23, 207, 12, 218, 31, 230),
        ("sensitive", 128, 150, 190, 88, 106, 278),
        ("confident", 81, 107, 78, 110, 15, 188),
    ]
    .into_iter()
    .map(|(l, sy, sn, ty, tn, d, t)| ResponseTable::new(l, sy, sn, ty, tn, d, t))
    .collect()
}

/// One published stability row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub trait_label: &'static str,
    pub mean_pre: f64,
    pub mean_post: f64,
    pub mean_abs_diff: f64,
    pub sub_threshold_count: usize,
}

pub fn table3() -> Vec<StabilityRow> {
    [
        ("curious", 4.9050, 4.8800, 0.1450, 44),
        ("cautious", 3.5150, 3.4100, 0.4350, 23),
        ("organized", 4.9850, 4.9900, 0.0250, 50),
        ("careless", 1.5100, 1.4200, 0.2100, 43),
        ("outgoing", 4.9100, 4.9450, 0.1450, 43),
        ("reserved", 1.9350, 1.9600, 0.0750, 46),
        ("friendly", 3.6600, 3.5950, 0.8550, 17),
        ("critical", 3.1850, 3.1350, 0.1300, 44),
        ("sensitive", 1.6300, 1.6250, 0.1850, 38),
        ("confident", 5.0000, 4.9900, 0.0100, 49),
    ]
    .into_iter()
    .map(
        |(trait_label, mean_pre, mean_post, mean_abs_diff, sub_threshold_count)| StabilityRow {
            trait_label,
            mean_pre,
            mean_post,
            mean_abs_diff,
            sub_threshold_count,
        },
    )
    .collect()
}
