//! Row-major rectangular grids shared by full-resolution levels and sketches.

use serde::{Deserialize, Serialize};

/// A dense `height x width` grid stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    cells: Vec<T>,
}

impl<T> Grid<T> {
    /// Builds a grid from row-major cells. Panics if `cells.len() != height * width`.
    pub fn from_cells(height: usize, width: usize, cells: Vec<T>) -> Self {
        assert_eq!(
            cells.len(),
            height * width,
            "grid cell count does not match {height}x{width}"
        );
        Grid { height, width, cells }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut cells = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                cells.push(f(r, c));
            }
        }
        Grid { height, width, cells }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[T] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        debug_assert!(row < self.height && col < self.width);
        &self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.height && col < self.width);
        self.cells[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.cells[row * self.width..(row + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.cells.chunks(self.width.max(1)).take(self.height)
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = &T> + '_ {
        (0..self.height).map(move |r| self.get(r, col))
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            cells: self.cells.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Grid {
            height,
            width,
            cells: vec![value; height * width],
        }
    }

    /// Copies the `h x w` sub-grid whose top-left corner is `(row, col)`.
    pub fn window(&self, row: usize, col: usize, h: usize, w: usize) -> Grid<T> {
        assert!(row + h <= self.height && col + w <= self.width, "window out of bounds");
        Grid::from_fn(h, w, |r, c| self.get(row + r, col + c).clone())
    }
}
