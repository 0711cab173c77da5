// Copyright 2026 The mpenc-rs Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Synchronous publish-subscribe and one-shot completion handles.
//!
//! Cancelling a subscription takes effect immediately, even for a dispatch
//! already under way. A subscription made during a dispatch receives values
//! from the next dispatch on.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

type Callback<T> = Rc<RefCell<dyn FnMut(&T)>>;

struct Entry<T> {
    callback: Callback<T>,
    live: Rc<Cell<bool>>,
}

pub struct Observable<T> {
    entries: Rc<RefCell<Vec<Entry<T>>>>,
}

impl<T> Default for Observable<T> {
    fn default() -> Self {
        Observable {
            entries: Rc::new(RefCell::new(Vec::new())),
        }
    }
}

impl<T> std::fmt::Debug for Observable<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observable({} subscribers)", self.entries.borrow().len())
    }
}

/// Cancels its subscription when `cancel` is called. Dropping the handle
/// keeps the subscription alive.
#[derive(Debug, Clone)]
pub struct Subscription {
    live: Rc<Cell<bool>>,
}

impl Subscription {
    pub fn cancel(&self) {
        self.live.set(false);
    }

    pub fn is_active(&self) -> bool {
        self.live.get()
    }
}

impl<T> Observable<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn subscribe(&self, f: impl FnMut(&T) + 'static) -> Subscription {
        let live = Rc::new(Cell::new(true));
        self.entries.borrow_mut().push(Entry {
            callback: Rc::new(RefCell::new(f)),
            live: live.clone(),
        });
        Subscription { live }
    }

    pub fn publish(&self, value: &T) {
        let snapshot: Vec<(Callback<T>, Rc<Cell<bool>>)> = {
            let mut entries = self.entries.borrow_mut();
            entries.retain(|e| e.live.get());
            entries
                .iter()
                .map(|e| (e.callback.clone(), e.live.clone()))
                .collect()
        };
        for (cb, live) in snapshot {
            if live.get() {
                (cb.borrow_mut())(value);
            }
        }
    }

    pub fn subscriber_count(&self) -> usize {
        self.entries
            .borrow()
            .iter()
            .filter(|e| e.live.get())
            .count()
    }
}

/// A value that is set exactly once and can be polled by any clone.
#[derive(Debug)]
pub struct Completion<T> {
    slot: Rc<RefCell<Option<T>>>,
}

impl<T> Clone for Completion<T> {
    fn clone(&self) -> Self {
        Completion {
            slot: self.slot.clone(),
        }
    }
}

impl<T: Clone> Completion<T> {
    pub fn new() -> Self {
        Completion {
            slot: Rc::new(RefCell::new(None)),
        }
    }

    /// Returns false if the completion was already resolved.
    pub fn resolve(&self, value: T) -> bool {
        let mut slot = self.slot.borrow_mut();
        if slot.is_some() {
            return false;
        }
        *slot = Some(value);
        true
    }

    pub fn get(&self) -> Option<T> {
        self.slot.borrow().clone()
    }

    pub fn is_resolved(&self) -> bool {
        self.slot.borrow().is_some()
    }
}

impl<T: Clone> Default for Completion<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cancellation_is_immediate() {
        let obs: Observable<u32> = Observable::new();
        let seen = Rc::new(RefCell::new(Vec::new()));
        let second: Rc<RefCell<Option<Subscription>>> = Rc::new(RefCell::new(None));
        let s2 = second.clone();
        let log = seen.clone();
        obs.subscribe(move |v| {
            log.borrow_mut().push(("first", *v));
            if let Some(s) = s2.borrow().as_ref() {
                s.cancel();
            }
        });
        let log = seen.clone();
        *second.borrow_mut() = Some(obs.subscribe(move |v| log.borrow_mut().push(("second", *v))));
        obs.publish(&1);
        assert_eq!(*seen.borrow(), vec![("first", 1)]);
        assert_eq!(obs.subscriber_count(), 1);
    }

    #[test]
    fn new_subscriptions_start_next_dispatch() {
        let obs: Rc<Observable<u32>> = Rc::new(Observable::new());
        let seen = Rc::new(RefCell::new(Vec::new()));
        let inner = obs.clone();
        let log = seen.clone();
        let added = Rc::new(Cell::new(false));
        obs.subscribe(move |_| {
            if !added.replace(true) {
                let log = log.clone();
                inner.subscribe(move |v| log.borrow_mut().push(*v));
            }
        });
        obs.publish(&1);
        assert!(seen.borrow().is_empty());
        obs.publish(&2);
        assert_eq!(*seen.borrow(), vec![2]);
    }

    #[test]
    fn completion_resolves_once() {
        let c: Completion<&str> = Completion::new();
        let d = c.clone();
        assert!(d.get().is_none());
        assert!(c.resolve("ok"));
        assert!(!c.resolve("again"));
        assert_eq!(d.get(), Some("ok"));
    }
}
