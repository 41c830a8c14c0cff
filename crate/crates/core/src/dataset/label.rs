use std::fmt;

/// One of the twelve classification targets.
///
/// The ten command words occupy indices 0..=9 in a fixed order, followed by
/// the catch-all `Unknown` and the noise-only `Silence`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Yes,
    No,
    Up,
    Down,
    Left,
    Right,
    On,
    Off,
    Stop,
    Go,
    Unknown,
    Silence,
}

/// Folder holding long noise recordings in the Speech Commands layout.
pub const BACKGROUND_NOISE_DIR: &str = "_background_noise_";

impl Label {
    pub const COUNT: usize = 12;

    pub const ALL: [Label; Label::COUNT] = [
        Label::Yes,
        Label::No,
        Label::Up,
        Label::Down,
        Label::Left,
        Label::Right,
        Label::On,
        Label::Off,
        Label::Stop,
        Label::Go,
        Label::Unknown,
        Label::Silence,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Yes => "YES",
            Label::No => "NO",
            Label::Up => "UP",
            Label::Down => "DOWN",
            Label::Left => "LEFT",
            Label::Right => "RIGHT",
            Label::On => "ON",
            Label::Off => "OFF",
            Label::Stop => "STOP",
            Label::Go => "GO",
            Label::Unknown => "UNKNOWN",
            Label::Silence => "SILENCE",
        }
    }

    /// Lowercase folder name for command words; `None` for the two
    /// synthetic classes.
    pub fn folder(self) -> Option<&'static str> {
        match self {
            Label::Unknown | Label::Silence => None,
            word => Some(COMMAND_WORDS[word.index()]),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const COMMAND_WORDS: [&str; 10] = [
    "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go",
];

/// Maps a dataset folder name to its label.
///
/// Returns `None` for the background-noise folder, whose files are never
/// word examples. Every other name is a word: command words get their own
/// label and everything else is `Unknown`.
pub fn assign_label(folder_name: &str) -> Option<Label> {
    if folder_name == BACKGROUND_NOISE_DIR {
        return None;
    }
    let label = COMMAND_WORDS
        .iter()
        .position(|w| *w == folder_name)
        .and_then(Label::from_index)
        .unwrap_or(Label::Unknown);
    Some(label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_words_and_unknown() {
        assert_eq!(assign_label("yes"), Some(Label::Yes));
        assert_eq!(assign_label("yes").unwrap().index(), 0);
        assert_eq!(assign_label("stop").unwrap().index(), 8);
        assert_eq!(assign_label("bed"), Some(Label::Unknown));
        assert_eq!(assign_label("bed").unwrap().index(), 10);
        assert_eq!(assign_label(BACKGROUND_NOISE_DIR), None);
    }

    #[test]
    fn twelve_distinct_indices() {
        let mut seen: Vec<usize> = Label::ALL.iter().map(|l| l.index()).collect();
        seen.dedup();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
        assert_eq!(Label::Silence.index(), 11);
        for l in Label::ALL {
            assert_eq!(Label::from_index(l.index()), Some(l));
        }
        assert_eq!(Label::from_index(12), None);
    }

    #[test]
    fn folder_round_trip() {
        for word in COMMAND_WORDS {
            let label = assign_label(word).unwrap();
            assert_eq!(label.folder(), Some(word));
        }
    }
}
