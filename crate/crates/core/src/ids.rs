//! Identifier newtypes. Ids are dense per-kind counters allocated by the
//! owning store, so replay reproduces them exactly.

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash,
            serde::Serialize, serde::Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl $name {
            pub const PREFIX: &'static str = $prefix;
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}{}", $prefix, self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let digits = s.strip_prefix($prefix).unwrap_or(s);
                digits
                    .parse::<u64>()
                    .map($name)
                    .map_err(|_| format!("invalid {} id `{}`", stringify!($name), s))
            }
        }
    };
}

id_type!(ClaimId, "c");
id_type!(EntityId, "e");
id_type!(RelationshipId, "r");
id_type!(ConclusionId, "k");
id_type!(MemoryId, "m");
id_type!(ContextId, "x");
id_type!(IntentionId, "i");
id_type!(EntryId, "w");
