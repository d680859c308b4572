//! Dense identifiers. Every id indexes a row of some table in `[0, len)`.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! dense_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_index(i: usize) -> Self {
                Self(u32::try_from(i).expect("id overflows u32"))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

dense_id!(UserId);
dense_id!(ItemId);
dense_id!(QueryId);
dense_id!(WordId);
dense_id!(SlotId);
dense_id!(ValueId);
dense_id!(
    /// Index into the training pair vocabulary (slot-value pairs seen in
    /// training with a known value).
    PairId
);
