# tasks package

