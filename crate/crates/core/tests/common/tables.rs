//! Published per-tool counts and the percentages printed next to them.

pub type Counts = (u64, u64, &'static str);

/// Tool, then (TP, FP, precision%) before and after verification.
pub const PRECISION: [(&str, Counts, Counts); 8] = [
    ("Oyente", (25, 488, "4.9"), (25, 8, "75.8")),
    ("Mythril", (26, 15474, "0.2"), (26, 8, "76.5")),
    ("Securify1", (15, 2372, "0.6"), (22, 8, "73.3")),
    ("Securify2", (3, 2489, "0.1"), (3, 5, "37.5")),
    ("Smartian", (7, 15, "31.8"), (7, 5, "58.3")),
    ("Saifish", (19, 2270, "0.8"), (21, 8, "72.4")),
    ("Slither", (31, 4587, "0.7"), (31, 9, "77.5")),
    ("EThor", (26, 3269, "0.8"), (28, 9, "75.7")),
];

pub type Row = ([u64; 4], [&'static str; 3]);

/// Tool, then ([TP, FP, FN, TN], [precision, recall, F1]) before and after.
pub const LABELED: [(&str, Row, Row); 8] = [
    ("Oyente", ([21, 43, 10, 69], ["32.8", "67.7", "44.2"]), ([21, 8, 10, 104], ["72.4", "67.7", "70.0"])),
    ("Mythril", ([10, 48, 21, 64], ["17.2", "32.3", "22.5"]), ([10, 7, 21, 105], ["58.8", "32.3", "41.7"])),
    ("Securify1", ([17, 31, 14, 81], ["35.4", "54.8", "43.0"]), ([17, 8, 14, 104], ["68.0", "54.8", "60.7"])),
    ("Securify2", ([6, 47, 25, 65], ["11.3", "19.4", "14.3"]), ([6, 9, 25, 103], ["40.0", "19.4", "26.1"])),
    ("Smartian", ([15, 19, 16, 93], ["44.1", "48.4", "46.2"]), ([15, 7, 16, 105], ["68.2", "48.4", "56.6"])),
    ("Saifish", ([19, 24, 12, 88], ["44.2", "61.3", "51.4"]), ([19, 8, 12, 104], ["70.4", "61.3", "65.5"])),
    ("Slither", ([29, 38, 2, 74], ["43.3", "93.5", "59.2"]), ([29, 9, 2, 103], ["76.3", "93.5", "84.1"])),
    ("EThor", ([25, 55, 6, 57], ["31.3", "80.6", "45.0"]), ([25, 9, 6, 103], ["73.5", "80.6", "76.9"])),
];
